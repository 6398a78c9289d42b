#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace studio {

// Every failure the engine surfaces is one of these kinds. The HTTP facade
// and the CLI map kinds to status codes / exit codes, so keep the set small.
enum class ErrorKind {
  kValidation,     // malformed input (422 / exit 2)
  kPrecondition,   // input well-formed but not acceptable right now (422)
  kNotFound,       // unknown session, job, blob (404 / exit 3)
  kWrongState,     // session state forbids the operation (409)
  kBusy,           // a stage is already running on the session (409)
  kParse,          // model output failed schema validation after repair
  kStage,          // stage-level contract violated (scene count, distinctness)
  kBackend,        // backend refused the request (4xx)
  kTimeout,        // backend timed out on every attempt
  kAuth,           // backend rejected the credential
  kExhausted,      // retryable failures outlasted max_retries
  kIntegrity,      // stored bytes do not match their digest
  kIo,             // filesystem trouble
  kEncoder,        // video encoder missing or exited nonzero
  kConfig,         // invalid configuration
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Backend-family errors are retryable at the stage level: the session is
  // left untouched and the user may re-run.
  bool is_backend_failure() const noexcept {
    return kind_ == ErrorKind::kBackend || kind_ == ErrorKind::kTimeout ||
           kind_ == ErrorKind::kAuth || kind_ == ErrorKind::kExhausted;
  }

 private:
  ErrorKind kind_;
};

// Wrong-state errors carry the state the session was actually in so callers
// can show it.
class WrongStateError : public Error {
 public:
  WrongStateError(std::string state, std::string message)
      : Error(ErrorKind::kWrongState, std::move(message)),
        state_(std::move(state)) {}

  const std::string& state() const noexcept { return state_; }

 private:
  std::string state_;
};

}  // namespace studio

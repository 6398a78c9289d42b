#pragma once

// Pipeline core: the session state machine, per-session leases, and the
// job registry that runs long stages in the background.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "studio/config.hpp"
#include "studio/context.hpp"
#include "studio/domain.hpp"
#include "studio/gateway.hpp"
#include "studio/prompts.hpp"
#include "studio/store.hpp"
#include "studio/storyboard.hpp"
#include "studio/video.hpp"

namespace studio {

enum class JobKind { kValidate, kAnalogies, kStoryboard, kSceneImage, kVideo };
enum class JobStatus { kQueued, kRunning, kSucceeded, kFailed };

std::string_view to_string(JobKind k);
std::string_view to_string(JobStatus s);
JobKind parse_job_kind(std::string_view s);

struct ProgressEvent {
  std::string job_id;
  Timestamp at{};
  std::string stage_label;
  double fraction = 0.0;
  std::optional<std::string> message;
  bool terminal = false;
};

struct GenerationJob {
  std::string id;
  std::string session_id;
  JobKind kind = JobKind::kValidate;
  std::optional<int> scene_index;
  JobStatus status = JobStatus::kQueued;
  std::vector<ProgressEvent> progress_events;
  std::optional<ErrorKind> error_kind;
  std::optional<std::string> error;
};

void to_json(json& j, const ProgressEvent& e);
void to_json(json& j, const GenerationJob& job);

/// Jobs and their event streams. Fractions never decrease and every job
/// gets exactly one terminal event, emitted last.
class JobRegistry {
 public:
  GenerationJob create(const std::string& session_id, JobKind kind,
                       std::optional<int> scene_index = std::nullopt);
  void start(const std::string& id);
  void progress(const std::string& id, const std::string& stage, double fraction,
                std::optional<std::string> message = std::nullopt);
  void succeed(const std::string& id, const std::string& message);
  void fail(const std::string& id, ErrorKind kind, const std::string& message);

  GenerationJob get(const std::string& id) const;

  /// Events from index `from` on, waiting up to `timeout` for at least one.
  std::vector<ProgressEvent> events_since(const std::string& id, std::size_t from,
                                          std::chrono::milliseconds timeout) const;

  /// Blocks until the job is terminal.
  GenerationJob wait(const std::string& id) const;

 private:
  void push(GenerationJob& job, ProgressEvent e);
  GenerationJob& find(const std::string& id);
  const GenerationJob& find(const std::string& id) const;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, GenerationJob> jobs_;
};

/// Fixed-size worker pool; drains its queue before joining.
class WorkerPool {
 public:
  explicit WorkerPool(int threads);
  ~WorkerPool();
  void post(std::function<void()> task);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

struct EngineOptions {
  GenerationConfig generation;
  std::optional<std::int64_t> mock_seed;  // used when generation.seed is unset
  TimingConfig timing;
  RenderConfig render;
  int max_jobs = 4;
  int max_renders = 2;
};

class Engine {
 public:
  Engine(EngineOptions options, std::shared_ptr<Store> store, std::shared_ptr<Gateway> gateway,
         std::shared_ptr<const PromptLibrary> prompts);
  ~Engine();

  static std::unique_ptr<Engine> from_config(const ServiceConfig& config);

  PipelineSession create_session(const Concept& c);
  PipelineSession get_session(const std::string& id) const;
  SessionPage list_sessions(std::size_t offset, std::size_t limit) const;

  // Synchronous stages. Each holds the session lease for its duration.
  DefinitionCheck validate_concept(const std::string& id);
  std::vector<Analogy> generate_analogies(const std::string& id);
  PipelineSession choose_analogy(const std::string& id, const std::string& analogy_id);
  Storyboard run_storyboard_stage(const std::string& id);
  PipelineSession edit_scene(const std::string& id, int index,
                             const std::optional<std::string>& description,
                             const std::optional<std::string>& image_prompt);
  Scene regenerate_scene_image(const std::string& id, int index);
  BlobRef run_video_stage(const std::string& id);

  /// Background stage: takes the lease and checks the state before
  /// returning, so busy and wrong-state errors surface synchronously.
  GenerationJob submit(const std::string& id, JobKind kind,
                       std::optional<int> scene_index = std::nullopt);

  JobRegistry& jobs() { return jobs_; }
  const JobRegistry& jobs() const { return jobs_; }
  Store& store() { return *store_; }
  Gateway& gateway() { return *gateway_; }
  const PromptLibrary& prompts() const { return *prompts_; }

  class Lease;

 private:
  std::shared_ptr<Lease> acquire(const std::string& id);
  void release(const std::string& id);
  void check_stage(const PipelineSession& s, JobKind kind, std::optional<int> scene_index) const;
  json run_stage(const std::string& id, JobKind kind, std::optional<int> scene_index,
                 const ProgressFn& progress);
  GenerationContext context();
  void commit(PipelineSession& s);

  EngineOptions options_;
  std::shared_ptr<Store> store_;
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<const PromptLibrary> prompts_;
  JobRegistry jobs_;
  std::mutex lease_mu_;
  std::set<std::string> leased_;
  std::counting_semaphore<64> render_slots_;
  std::unique_ptr<WorkerPool> pool_;  // last: joined before the rest is torn down
};

/// Moves `s` along one allowed edge; anything else is a programming error.
void transition(PipelineSession& s, SessionState to);

}  // namespace studio

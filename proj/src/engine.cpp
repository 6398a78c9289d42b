#include "studio/engine.hpp"

#include <algorithm>

#include "studio/coverage.hpp"
#include "studio/storyboard.hpp"

namespace studio {

namespace {

constexpr std::pair<JobKind, std::string_view> kJobKinds[] = {
    {JobKind::kValidate, "validate"},      {JobKind::kAnalogies, "analogies"},
    {JobKind::kStoryboard, "storyboard"},  {JobKind::kSceneImage, "scene_image"},
    {JobKind::kVideo, "video"},
};

std::string state_name(SessionState s) { return std::string(to_string(s)); }

[[noreturn]] void wrong_state(const PipelineSession& s, std::string_view op, std::string_view need) {
  throw WrongStateError(state_name(s.state), std::string(op) + " requires state " +
                                                 std::string(need) + "; session " + s.id +
                                                 " is in " + state_name(s.state));
}

bool has_all_images(const Storyboard& sb) {
  return std::all_of(sb.scenes.begin(), sb.scenes.end(),
                     [](const Scene& sc) { return sc.image.has_value(); });
}

}  // namespace

std::string_view to_string(JobKind k) {
  for (const auto& [kind, name] : kJobKinds) {
    if (kind == k) return name;
  }
  return "?";
}

JobKind parse_job_kind(std::string_view s) {
  for (const auto& [kind, name] : kJobKinds) {
    if (name == s) return kind;
  }
  throw Error(ErrorKind::kValidation, "unknown job kind '" + std::string(s) + "'");
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::kQueued: return "queued";
    case JobStatus::kRunning: return "running";
    case JobStatus::kSucceeded: return "succeeded";
    case JobStatus::kFailed: return "failed";
  }
  return "?";
}

void to_json(json& j, const ProgressEvent& e) {
  j = {{"job_id", e.job_id},
       {"timestamp", format_rfc3339(e.at)},
       {"stage_label", e.stage_label},
       {"fraction", e.fraction},
       {"message", e.message ? json(*e.message) : json(nullptr)},
       {"terminal", e.terminal}};
}

void to_json(json& j, const GenerationJob& job) {
  j = {{"id", job.id},
       {"session_id", job.session_id},
       {"kind", to_string(job.kind)},
       {"scene_index", job.scene_index ? json(*job.scene_index) : json(nullptr)},
       {"status", to_string(job.status)},
       {"progress_events", job.progress_events},
       {"error_kind", job.error_kind ? json(to_string(*job.error_kind)) : json(nullptr)},
       {"error", job.error ? json(*job.error) : json(nullptr)}};
}

// ---- jobs -----------------------------------------------------------------------

GenerationJob JobRegistry::create(const std::string& session_id, JobKind kind,
                                  std::optional<int> scene_index) {
  GenerationJob job;
  job.id = random_id();
  job.session_id = session_id;
  job.kind = kind;
  job.scene_index = scene_index;
  std::lock_guard lock(mu_);
  push(job, {job.id, {}, "queued", 0.0, std::nullopt, false});
  jobs_[job.id] = job;
  return job;
}

void JobRegistry::push(GenerationJob& job, ProgressEvent e) {
  if (!job.progress_events.empty()) {
    e.fraction = std::max(e.fraction, job.progress_events.back().fraction);
  }
  e.fraction = std::clamp(e.fraction, 0.0, 1.0);
  e.at = monotonic_now();
  job.progress_events.push_back(std::move(e));
  cv_.notify_all();
}

GenerationJob& JobRegistry::find(const std::string& id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorKind::kNotFound, "unknown job " + id);
  return it->second;
}

const GenerationJob& JobRegistry::find(const std::string& id) const {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorKind::kNotFound, "unknown job " + id);
  return it->second;
}

void JobRegistry::start(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& job = find(id);
  if (job.status != JobStatus::kQueued) return;
  job.status = JobStatus::kRunning;
  push(job, {id, {}, "running", 0.0, std::nullopt, false});
}

void JobRegistry::progress(const std::string& id, const std::string& stage, double fraction,
                           std::optional<std::string> message) {
  std::lock_guard lock(mu_);
  auto& job = find(id);
  if (job.status == JobStatus::kSucceeded || job.status == JobStatus::kFailed) return;
  push(job, {id, {}, stage, fraction, std::move(message), false});
}

void JobRegistry::succeed(const std::string& id, const std::string& message) {
  std::lock_guard lock(mu_);
  auto& job = find(id);
  if (job.status == JobStatus::kSucceeded || job.status == JobStatus::kFailed) return;
  job.status = JobStatus::kSucceeded;
  push(job, {id, {}, "succeeded", 1.0, message, true});
}

void JobRegistry::fail(const std::string& id, ErrorKind kind, const std::string& message) {
  std::lock_guard lock(mu_);
  auto& job = find(id);
  if (job.status == JobStatus::kSucceeded || job.status == JobStatus::kFailed) return;
  job.status = JobStatus::kFailed;
  job.error_kind = kind;
  job.error = message;
  push(job, {id, {}, "failed", 0.0, message, true});
}

GenerationJob JobRegistry::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  return find(id);
}

std::vector<ProgressEvent> JobRegistry::events_since(const std::string& id, std::size_t from,
                                                     std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  find(id);
  cv_.wait_for(lock, timeout, [&] { return find(id).progress_events.size() > from; });
  const auto& events = find(id).progress_events;
  if (from >= events.size()) return {};
  return {events.begin() + static_cast<std::ptrdiff_t>(from), events.end()};
}

GenerationJob JobRegistry::wait(const std::string& id) const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] {
    auto s = find(id).status;
    return s == JobStatus::kSucceeded || s == JobStatus::kFailed;
  });
  return find(id);
}

// ---- worker pool ----------------------------------------------------------------

WorkerPool::WorkerPool(int threads) {
  for (int i = 0; i < threads; ++i) {
    threads_.emplace_back([this] {
      for (;;) {
        std::function<void()> task;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
          if (queue_.empty()) return;
          task = std::move(queue_.front());
          queue_.pop_front();
        }
        task();
      }
    });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::post(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

// ---- engine ---------------------------------------------------------------------

class Engine::Lease {
 public:
  Lease(Engine* engine, std::string id) : engine_(engine), id_(std::move(id)) {}
  ~Lease() { engine_->release(id_); }
  Lease(const Lease&) = delete;
  Lease& operator=(const Lease&) = delete;

 private:
  Engine* engine_;
  std::string id_;
};

void transition(PipelineSession& s, SessionState to) {
  if (!is_allowed_transition(s.state, to)) {
    throw std::logic_error("illegal transition " + state_name(s.state) + " -> " + state_name(to));
  }
  s.state = to;
}

Engine::Engine(EngineOptions options, std::shared_ptr<Store> store,
               std::shared_ptr<Gateway> gateway, std::shared_ptr<const PromptLibrary> prompts)
    : options_(std::move(options)),
      store_(std::move(store)),
      gateway_(std::move(gateway)),
      prompts_(std::move(prompts)),
      render_slots_(std::clamp(options_.max_renders, 1, 64)),
      pool_(std::make_unique<WorkerPool>(std::clamp(options_.max_jobs, 1, 64))) {}

Engine::~Engine() { pool_.reset(); }

std::unique_ptr<Engine> Engine::from_config(const ServiceConfig& config) {
  config.validate();
  EngineOptions opts;
  opts.generation = config.generation;
  if (config.text.is_mock()) opts.mock_seed = config.mock.seed;
  opts.timing = config.timing;
  opts.render = config.render;
  opts.max_jobs = config.max_jobs;
  opts.max_renders = config.max_renders;
  auto store = std::make_shared<FsStore>(config.data_root);
  std::shared_ptr<Gateway> gateway =
      Gateway::from_config(config.text, config.image, config.caption, config.mock);
  auto prompts = std::make_shared<const PromptLibrary>(PromptLibrary::load_dir(config.templates_dir));
  return std::make_unique<Engine>(std::move(opts), std::move(store), std::move(gateway),
                                  std::move(prompts));
}

std::shared_ptr<Engine::Lease> Engine::acquire(const std::string& id) {
  std::lock_guard lock(lease_mu_);
  if (!leased_.insert(id).second) {
    throw Error(ErrorKind::kBusy, "session " + id + " is busy with another stage");
  }
  return std::make_shared<Lease>(this, id);
}

void Engine::release(const std::string& id) {
  std::lock_guard lock(lease_mu_);
  leased_.erase(id);
}

GenerationContext Engine::context() {
  auto seed = options_.generation.seed ? options_.generation.seed : options_.mock_seed;
  return {*gateway_,
          *prompts_,
          *store_,
          seed,
          options_.generation.image_width,
          options_.generation.image_height,
          options_.generation.coverage_budget};
}

void Engine::commit(PipelineSession& s) {
  s.updated_at = monotonic_now();
  auto problems = invariant_violations(s);
  if (!problems.empty()) {
    throw std::logic_error("refusing to persist an inconsistent session: " + problems.front());
  }
  store_->save_session(s);
}

PipelineSession Engine::create_session(const Concept& c) {
  auto concept_value = Concept::make(c.name, c.subject, c.learner_level);
  PipelineSession s;
  s.id = random_id();
  s.concept_ = concept_value;
  s.created_at = monotonic_now();
  commit(s);
  return s;
}

PipelineSession Engine::get_session(const std::string& id) const {
  return store_->load_session(id);
}

SessionPage Engine::list_sessions(std::size_t offset, std::size_t limit) const {
  return store_->list_sessions(offset, limit);
}

void Engine::check_stage(const PipelineSession& s, JobKind kind,
                         std::optional<int> scene_index) const {
  switch (kind) {
    case JobKind::kValidate:
      if (s.state != SessionState::kCreated) wrong_state(s, "validate", "created");
      return;
    case JobKind::kAnalogies:
      if (s.state != SessionState::kConceptValidated) {
        wrong_state(s, "analogies", "concept_validated");
      }
      return;
    case JobKind::kStoryboard:
      if (s.state != SessionState::kAnalogyChosen) wrong_state(s, "storyboard", "analogy_chosen");
      return;
    case JobKind::kSceneImage: {
      if (s.state != SessionState::kStoryboardReady && s.state != SessionState::kVideoReady) {
        wrong_state(s, "scene regeneration", "storyboard_ready or video_ready");
      }
      int idx = scene_index.value_or(0);
      if (idx < 1 || idx > static_cast<int>(kSceneCount)) {
        throw Error(ErrorKind::kValidation,
                    "scene index must be between 1 and 4, got " + std::to_string(idx));
      }
      return;
    }
    case JobKind::kVideo:
      if (s.state != SessionState::kStoryboardReady) wrong_state(s, "video", "storyboard_ready");
      if (!s.storyboard || !has_all_images(*s.storyboard)) {
        throw Error(ErrorKind::kPrecondition,
                    "every scene needs an image before the video can be assembled");
      }
      return;
  }
}

json Engine::run_stage(const std::string& id, JobKind kind, std::optional<int> scene_index,
                       const ProgressFn& progress) {
  auto report = [&](const std::string& label, double f) {
    if (progress) progress(label, f);
  };
  auto s = store_->load_session(id);
  check_stage(s, kind, scene_index);
  auto ctx = context();

  switch (kind) {
    case JobKind::kValidate: {
      report("definition_check", 0.1);
      Bindings b{{"concept", s.concept_.name},
                 {"subject", std::string(to_string(s.concept_.subject))},
                 {"learner_level",
                  s.concept_.learner_level ? std::string(to_string(*s.concept_.learner_level)) : ""}};
      auto check = decode_definition_check(ask(ctx, TemplateId::kDefinitionCheck, b), s.concept_);
      s.definition_check = check;
      if (check.verdict == Verdict::kNotAConcept) {
        s.failure_reason = "not a concept: " + (check.rationale.empty() ? s.concept_.name
                                                                        : check.rationale);
        transition(s, SessionState::kFailed);
      } else {
        transition(s, SessionState::kConceptValidated);
      }
      commit(s);
      return check;
    }
    case JobKind::kAnalogies: {
      Bindings b{{"concept", s.concept_.name},
                 {"subject", std::string(to_string(s.concept_.subject))},
                 {"learner_level",
                  s.concept_.learner_level ? std::string(to_string(*s.concept_.learner_level)) : ""},
                 {"definition", s.definition_check->definition}};
      std::string last_problem;
      for (int attempt = 0; attempt < 2; ++attempt) {
        report(attempt == 0 ? "analogy_triple" : "analogy_triple (regenerating)",
               0.1 + 0.4 * attempt);
        if (attempt > 0) {
          b["retry_note"] = "A previous answer was rejected (" + last_problem +
                            "). Make the three analogies clearly different.";
          if (ctx.seed) ctx.seed = *ctx.seed + attempt;
        }
        std::vector<Analogy> triple;
        try {
          triple = decode_analogies(ask(ctx, TemplateId::kAnalogyTriple, b), s.concept_);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kParse) throw;
          last_problem = e.what();
          continue;
        }
        auto gate = analogy_quality_gate(triple);
        if (!gate.pass()) {
          last_problem = gate.summary();
          continue;
        }
        s.analogies = triple;
        transition(s, SessionState::kAnalogiesReady);
        commit(s);
        return triple;
      }
      throw Error(ErrorKind::kStage,
                  "could not obtain three distinct analogies after regeneration: " + last_problem);
    }
    case JobKind::kStoryboard: {
      const auto* analogy = s.chosen_analogy();
      auto sb = build_storyboard(s.concept_, *analogy, ctx, progress);
      s.storyboard = sb;
      transition(s, SessionState::kStoryboardReady);
      commit(s);
      return sb;
    }
    case JobKind::kSceneImage: {
      int idx = *scene_index;
      report("scene " + std::to_string(idx) + " image", 0.1);
      auto scene = studio::regenerate_scene_image(*s.storyboard, idx, ctx);
      s.storyboard->scenes[static_cast<std::size_t>(idx - 1)] = scene;
      if (s.state == SessionState::kVideoReady) {
        s.video.reset();
        transition(s, SessionState::kStoryboardReady);
      }
      commit(s);
      return scene;
    }
    case JobKind::kVideo: {
      report("manifest", 0.05);
      auto manifest = build_manifest(*s.storyboard, options_.timing);
      report("encoding", 0.15);
      render_slots_.acquire();
      RenderResult result;
      try {
        result = render_video(manifest, *store_, options_.render);
      } catch (...) {
        render_slots_.release();
        throw;
      }
      render_slots_.release();
      report(result.fallback ? "keyframe archive stored" : "video stored", 0.95);
      s.video = result.blob;
      transition(s, SessionState::kVideoReady);
      commit(s);
      return result.blob;
    }
  }
  throw std::logic_error("unhandled job kind");
}

DefinitionCheck Engine::validate_concept(const std::string& id) {
  auto lease = acquire(id);
  return run_stage(id, JobKind::kValidate, std::nullopt, {}).get<DefinitionCheck>();
}

std::vector<Analogy> Engine::generate_analogies(const std::string& id) {
  auto lease = acquire(id);
  return run_stage(id, JobKind::kAnalogies, std::nullopt, {}).get<std::vector<Analogy>>();
}

Storyboard Engine::run_storyboard_stage(const std::string& id) {
  auto lease = acquire(id);
  return run_stage(id, JobKind::kStoryboard, std::nullopt, {}).get<Storyboard>();
}

Scene Engine::regenerate_scene_image(const std::string& id, int index) {
  auto lease = acquire(id);
  return run_stage(id, JobKind::kSceneImage, index, {}).get<Scene>();
}

BlobRef Engine::run_video_stage(const std::string& id) {
  auto lease = acquire(id);
  return run_stage(id, JobKind::kVideo, std::nullopt, {}).get<BlobRef>();
}

PipelineSession Engine::choose_analogy(const std::string& id, const std::string& analogy_id) {
  auto lease = acquire(id);
  auto s = store_->load_session(id);
  switch (s.state) {
    case SessionState::kAnalogiesReady:
    case SessionState::kAnalogyChosen:
    case SessionState::kStoryboardReady:
    case SessionState::kVideoReady:
      break;
    default:
      wrong_state(s, "choose", "analogies_ready or later");
  }
  const auto& triple = *s.analogies;
  bool known = std::any_of(triple.begin(), triple.end(),
                           [&](const Analogy& a) { return a.id == analogy_id; });
  if (!known) {
    throw Error(ErrorKind::kValidation,
                "analogy " + analogy_id + " is not one of the session's three analogies");
  }
  if (s.state != SessionState::kAnalogiesReady && s.chosen_analogy_id == analogy_id) return s;

  // Walk back along the backtracking edges, clearing what each step owned.
  if (s.state == SessionState::kVideoReady) {
    s.video.reset();
    transition(s, SessionState::kStoryboardReady);
  }
  if (s.state == SessionState::kStoryboardReady) {
    s.storyboard.reset();
    transition(s, SessionState::kAnalogyChosen);
  }
  if (s.state == SessionState::kAnalogyChosen) {
    s.chosen_analogy_id.reset();
    transition(s, SessionState::kAnalogiesReady);
  }
  s.chosen_analogy_id = analogy_id;
  transition(s, SessionState::kAnalogyChosen);
  commit(s);
  return s;
}

PipelineSession Engine::edit_scene(const std::string& id, int index,
                                   const std::optional<std::string>& description,
                                   const std::optional<std::string>& image_prompt) {
  auto lease = acquire(id);
  auto s = store_->load_session(id);
  if (s.state != SessionState::kStoryboardReady && s.state != SessionState::kVideoReady) {
    wrong_state(s, "scene edit", "storyboard_ready or video_ready");
  }
  s.storyboard = studio::edit_scene(*s.storyboard, index, description, image_prompt);
  if (s.state == SessionState::kVideoReady) {
    s.video.reset();
    transition(s, SessionState::kStoryboardReady);
  }
  commit(s);
  return s;
}

GenerationJob Engine::submit(const std::string& id, JobKind kind, std::optional<int> scene_index) {
  auto lease = acquire(id);
  check_stage(store_->load_session(id), kind, scene_index);
  auto job = jobs_.create(id, kind, scene_index);
  pool_->post([this, lease, id, kind, scene_index, job_id = job.id]() mutable {
    jobs_.start(job_id);
    auto progress = [&](const std::string& label, double f) { jobs_.progress(job_id, label, f); };
    std::optional<ErrorKind> failed_kind;
    std::string message;
    try {
      run_stage(id, kind, scene_index, progress);
    } catch (const Error& e) {
      failed_kind = e.kind();
      message = e.what();
    } catch (const std::exception& e) {
      failed_kind = ErrorKind::kIo;
      message = std::string("internal error: ") + e.what();
    }
    // Free the session before announcing the outcome so a client reacting to
    // the terminal event can start the next stage at once.
    lease.reset();
    if (failed_kind) {
      jobs_.fail(job_id, *failed_kind, message);
    } else {
      jobs_.succeed(job_id, std::string(to_string(kind)) + " finished");
    }
  });
  return job;
}

}  // namespace studio

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "studio/api.hpp"
#include "studio/config.hpp"
#include "studio/coverage.hpp"
#include "studio/engine.hpp"
#include "studio/storyboard.hpp"
#include "studio/util.hpp"

namespace fs = std::filesystem;
using namespace studio;

namespace studio::cli {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kConfig:
      return kUsage;
    case ErrorKind::kNotFound:
      return kNotFound;
    case ErrorKind::kBackend:
    case ErrorKind::kTimeout:
    case ErrorKind::kAuth:
    case ErrorKind::kExhausted:
      return kBackendFailure;
    default:
      return kStageFailure;
  }
}

void export_markdown(const PipelineSession& session, const fs::path& file, const BlobFetch& fetch) {
  auto images = file.parent_path() / "images";
  fs::create_directories(images);
  auto md = storyboard_markdown(session, [&](const Scene& scene) {
    auto name = "scene-" + std::to_string(scene.index) + "." + image_extension(scene.image->media_type);
    write_file((images / name).string(), fetch(*scene.image));
    return "images/" + name;
  });
  write_file(file.string(), md);
}

void write_artifacts(const PipelineSession& session, const fs::path& dir, const BlobFetch& fetch) {
  fs::create_directories(dir);
  write_file((dir / "session.json").string(), json(session).dump(2) + "\n");
  if (session.storyboard) {
    write_file((dir / "storyboard.json").string(), json(*session.storyboard).dump(2) + "\n");
    export_markdown(session, dir / "storyboard.md", fetch);
  }
  if (session.video) {
    auto name = session.video->media_type == "video/mp4" ? "video.mp4" : "video-keyframes.zip";
    write_file((dir / name).string(), fetch(*session.video));
  }
}

}  // namespace studio::cli

namespace {

using studio::cli::exit_code_for;

int fail(const std::string& stage, const Error& e) {
  std::cerr << "error: stage " << stage << " failed (" << to_string(e.kind()) << "): " << e.what()
            << "\n";
  return exit_code_for(e.kind());
}

ServiceConfig resolve_config(const std::string& path, bool require) {
  std::string file = path;
  if (file.empty()) {
    if (const char* env = std::getenv("STUDIO_CONFIG"); env && *env) file = env;
  }
  if (file.empty() && require) {
    throw Error(ErrorKind::kConfig, "no configuration: pass --config FILE, set STUDIO_CONFIG, or use --mock");
  }
  auto config = file.empty() ? default_config() : load_config(file);
  apply_env_overrides(config);
  return config;
}

void force_mock(ServiceConfig& config) {
  config.text = backend_config(BackendKind::kMockText);
  config.image = backend_config(BackendKind::kMockImage);
  config.caption = backend_config(BackendKind::kMockCaption);
  if (config.mock.fixtures_path.empty()) config.mock.fixtures_path = default_config().mock.fixtures_path;
}

int run_local(const cli::RunArgs& args, ServiceConfig config) {
  auto started = std::chrono::steady_clock::now();
  auto engine = Engine::from_config(config);
  auto log = [&](const std::string& line) {
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - started)
                  .count();
    std::cerr << "[" << ms << " ms] " << line << "\n";
  };

  PipelineSession session;
  try {
    session = engine->create_session(Concept::make(args.concept_name, args.subject, args.level));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kValidation ? cli::kUsage : exit_code_for(e.kind());
  }
  log("session " + session.id);

  std::string stage = "validate";
  try {
    auto check = engine->validate_concept(session.id);
    log("validate: " + std::string(to_string(check.verdict)));
    if (check.verdict == Verdict::kNotAConcept) {
      std::cerr << "error: stage validate failed: '" << args.concept_name
                << "' is not a teachable concept (" << check.rationale << ")\n";
      return cli::kStageFailure;
    }
    stage = "analogies";
    auto analogies = engine->generate_analogies(session.id);
    for (std::size_t i = 0; i < analogies.size(); ++i) {
      log("analogy " + std::to_string(i + 1) + ": " + analogies[i].title);
    }
    stage = "choose";
    engine->choose_analogy(session.id, analogies[static_cast<std::size_t>(args.choose - 1)].id);
    log("chose analogy " + std::to_string(args.choose));
    stage = "storyboard";
    auto sb = engine->run_storyboard_stage(session.id);
    for (const auto& scene : sb.scenes) {
      const auto* best = best_attempt(scene.coverage);
      log("scene " + std::to_string(scene.index) + ": coverage " +
          std::to_string(best ? best->report.coverage_ratio : 0.0).substr(0, 4) + " after " +
          std::to_string(scene.coverage.size()) + " attempt(s)");
    }
    stage = "video";
    auto video = engine->run_video_stage(session.id);
    log("video: " + video.media_type + " " + std::to_string(video.byte_length) + " bytes");
    stage = "export";
    session = engine->get_session(session.id);
    cli::write_artifacts(session, args.out,
                         [&](const BlobRef& ref) { return engine->store().get_blob(ref); });
  } catch (const Error& e) {
    return fail(stage, e);
  }
  log("wrote " + args.out.string());
  std::cout << session.id << "\n";
  return cli::kOk;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turns a STEM concept into an analogy storyboard and an animated video."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Service configuration file (JSON)");

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline non-interactively");
  cli::RunArgs run_args;
  std::string subject = "other";
  std::string level;
  bool mock = false;
  std::optional<std::int64_t> seed;
  std::string api;
  std::string out = run_args.out.string();
  run->add_option("--concept", run_args.concept_name, "STEM concept to explain")->required();
  run->add_option("--subject", subject, "math, physics, programming or other");
  run->add_option("--level", level, "novice, intermediate or advanced");
  run->add_option("--choose", run_args.choose, "Which of the three analogies to use (1-3)");
  run->add_flag("--mock", mock, "Use the deterministic offline backends");
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "Mock seed");
  run->add_option("--api", api, "Drive a running service at this base URL instead");

  // coverage verify
  auto* coverage = app.add_subcommand("coverage", "Component coverage tools");
  coverage->require_subcommand(1);
  auto* verify = coverage->add_subcommand("verify", "Check a probe text against a checklist");
  std::string checklist_file, text_file, source = "image_caption";
  verify->add_option("--checklist", checklist_file, "ComponentChecklist JSON")->required();
  verify->add_option("--text", text_file, "Probe text file")->required();
  verify->add_option("--source", source, "image_caption or scene_description");

  // export
  auto* exp = app.add_subcommand("export", "Export a session's storyboard");
  std::string export_session, format = "markdown", export_out;
  exp->add_option("--session", export_session, "Session id")->required();
  exp->add_option("--format", format, "doc or markdown");
  exp->add_option("--out", export_out, "Output file");

  // sessions
  auto* sessions = app.add_subcommand("sessions", "Inspect stored sessions");
  sessions->require_subcommand(1);
  auto* list = sessions->add_subcommand("list", "List sessions, newest first");
  std::size_t offset = 0, limit = 20;
  list->add_option("--offset", offset);
  list->add_option("--limit", limit);
  auto* show = sessions->add_subcommand("show", "Print one session document");
  std::string show_id;
  show->add_option("id", show_id, "Session id")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::optional<int> port;
  std::string host;
  serve->add_option("--port", port);
  serve->add_option("--host", host);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*run) {
      if (trim(run_args.concept_name).empty()) {
        std::cerr << "usage error: --concept must not be empty\n";
        return cli::kUsage;
      }
      if (run_args.choose < 1 || run_args.choose > 3) {
        std::cerr << "usage error: --choose must be 1, 2 or 3\n";
        return cli::kUsage;
      }
      run_args.subject = parse_subject(subject);
      if (!level.empty()) run_args.level = parse_learner_level(level);
      run_args.out = out;
      if (!api.empty()) {
        run_args.api = api;
        return cli::run_remote(run_args);
      }
      auto config = resolve_config(config_path, !mock);
      if (mock) force_mock(config);
      if (seed) config.mock.seed = *seed;
      return run_local(run_args, config);
    }

    if (*verify) {
      for (const auto& f : {checklist_file, text_file}) {
        if (!fs::exists(f)) throw Error(ErrorKind::kNotFound, "no such file: " + f);
      }
      auto doc = json::parse(to_string(read_file(checklist_file)));
      auto checklist = doc.get<ComponentChecklist>();
      checklist.validate();
      auto report = verify_text(checklist, to_string(read_file(text_file)), parse_probe_source(source));
      std::cout << json(report).dump(2) << "\n";
      for (const auto& m : report.missing_required) std::cerr << "missing: " << m << "\n";
      return report.missing_required.empty() ? cli::kOk : cli::kStageFailure;
    }

    if (*exp) {
      auto config = resolve_config(config_path, false);
      FsStore store(config.data_root);
      auto session = store.load_session(export_session);
      auto fetch = [&](const BlobRef& ref) { return store.get_blob(ref); };
      if (format == "doc") {
        auto file = export_out.empty() ? export_session + ".json" : export_out;
        write_file(file, json(session).dump(2) + "\n");
        std::cout << file << "\n";
      } else if (format == "markdown") {
        auto file = fs::path(export_out.empty() ? export_session + ".md" : export_out);
        if (file.parent_path().empty()) file = fs::path(".") / file;
        cli::export_markdown(session, file, fetch);
        std::cout << file.string() << "\n";
      } else {
        std::cerr << "usage error: --format must be doc or markdown\n";
        return cli::kUsage;
      }
      return cli::kOk;
    }

    if (*list || *show) {
      auto config = resolve_config(config_path, false);
      FsStore store(config.data_root);
      if (*show) {
        std::cout << json(store.load_session(show_id)).dump(2) << "\n";
        return cli::kOk;
      }
      auto page = store.list_sessions(offset, limit);
      for (const auto& s : page.sessions) {
        std::cout << s.id << "  " << to_string(s.state) << "  " << format_rfc3339(s.created_at)
                  << "  " << s.concept_.name << "\n";
      }
      std::cerr << page.sessions.size() << " of " << page.total << " session(s)\n";
      return cli::kOk;
    }

    if (*serve) {
      auto config = resolve_config(config_path, false);
      if (port) config.port = *port;
      if (!host.empty()) config.host = host;
      auto engine = Engine::from_config(config);
      ApiOptions options;
      options.cors = config.cors;
      options.health = [config] { return health_report(config); };
      ApiServer server(*engine, options);
      int bound = server.bind(config.host, config.port);
      std::cerr << "listening on http://" << config.host << ":" << bound << " (backends "
                << (config.all_mock() ? "mock" : "live") << ")\n";
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      server.start_background();
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
      return cli::kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed document: " << e.what() << "\n";
    return cli::kUsage;
  }
  return cli::kUsage;
}

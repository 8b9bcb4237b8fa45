// vap: run experiments and ground/prompt file-based scenes.
//
// Exit codes: 0 success, 1 config or spec error, 2 IO or format error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vap/error.hpp"
#include "vap/file_scene.hpp"
#include "vap/harness.hpp"
#include "vap/io.hpp"
#include "vap/prompter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string input;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::optional<int> workers;
  std::string out = "out";
  std::string selector = "vote";
  std::string color = "red";
  double alpha = 0.5;
  std::string geometry = "mask";
};

vap::harness::ExperimentSpec load(const Options& o, vap::harness::Mode mode) {
  const fs::path path(o.config);
  const auto bytes = vap::io::read_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw vap::ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw vap::ConfigError("the experiment config must be a JSON object");
  if (!j.contains("mode")) j["mode"] = std::string(to_string(mode));
  auto spec = vap::harness::spec_from_json(j, path.parent_path());
  if (spec.mode != mode)
    throw vap::ConfigError("config mode \"" + std::string(to_string(spec.mode)) + "\" does not match subcommand \"" +
                           std::string(to_string(mode)) + "\"");
  if (o.seed) spec.seed = *o.seed;
  if (o.seeds) spec.seeds = *o.seeds;
  return spec;
}

int run_experiment(const Options& o, vap::harness::Mode mode) {
  const auto spec = load(o, mode);
  const int workers = vap::harness::resolve_workers(o.workers);
  const auto result = vap::harness::run_experiment(spec, workers);
  const auto paths = vap::harness::write_reports(spec, result, o.out);
  std::cout << vap::harness::to_csv(result.rows);
  std::cerr << "wrote " << paths.csv.string() << " and " << paths.jsonl.string() << "\n";
  return 0;
}

int run_file_scene(const Options& o, bool prompt) {
  const auto scene = vap::files::load_scene(o.input);
  const auto selector = vap::harness::parse_selector(o.selector);
  const auto grounding = vap::files::ground(scene, selector);
  fs::create_directories(o.out);
  json report = vap::files::grounding_to_json(grounding);
  for (const auto& v : grounding.per_view)
    if (v.mask) vap::io::save_mask(fs::path(o.out) / ("mask_v" + std::to_string(v.view_index) + ".pgm"), *v.mask);
  if (prompt) {
    if (o.geometry != "mask" && o.geometry != "box") throw vap::ConfigError("--geometry must be mask or box");
    const auto style = vap::make_style(o.color, o.alpha,
                                       o.geometry == "box" ? vap::PromptGeometry::box : vap::PromptGeometry::mask);
    const vap::Observation obs{scene.views, {}, scene.instruction};
    const auto prompted = vap::compose_prompt(obs, grounding, style);
    for (std::size_t v = 0; v < prompted.views.size(); ++v)
      vap::io::save_image(fs::path(o.out) / ("prompted_v" + std::to_string(v) + ".ppm"), prompted.views[v]);
    report["instruction"] = prompted.instruction;
    report["rewritten"] = prompted.instruction != scene.instruction;
  }
  const auto text = report.dump(2) + "\n";
  vap::io::write_bytes(fs::path(o.out) / (prompt ? "prompt.json" : "grounding.json"),
                       std::vector<std::uint8_t>(text.begin(), text.end()));
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personal-object grounding, prompting and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto experiment_flags = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "first episode seed");
    sub->add_option("--seeds", o.seeds, "number of seeded episodes per grid cell")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--workers", o.workers, "worker threads (default: VAP_WORKERS, then all cores)");
  };

  struct Verb {
    const char* name;
    const char* help;
    vap::harness::Mode mode;
  };
  const Verb verbs[] = {
      {"ground", "retrieval accuracy of the grounding step, or ground a file scene", vap::harness::Mode::ground},
      {"prompt", "prompt identification accuracy, or prompt a file scene", vap::harness::Mode::prompt},
      {"simulate", "seeded end-to-end episodes", vap::harness::Mode::simulate},
      {"ablate", "end-to-end episodes over a sweep grid", vap::harness::Mode::ablate},
      {"align", "embedding alignment metrics for two matrix files", vap::harness::Mode::align},
      {"crossview", "cross-view association solvers on random instances", vap::harness::Mode::crossview},
      {"sequential", "multi-target execution with re-grounding", vap::harness::Mode::sequential},
  };
  std::vector<std::pair<CLI::App*, vap::harness::Mode>> subs;
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    experiment_flags(sub);
    if (v.mode == vap::harness::Mode::ground || v.mode == vap::harness::Mode::prompt) {
      sub->add_option("--input", o.input, "scene file (JSON) with PPM views and listed proposals");
      sub->add_option("--selector", o.selector, "vote or average")->capture_default_str();
    }
    if (v.mode == vap::harness::Mode::prompt) {
      sub->add_option("--color", o.color, "red, green or blue")->capture_default_str();
      sub->add_option("--alpha", o.alpha, "overlay opacity")->capture_default_str();
      sub->add_option("--geometry", o.geometry, "mask or box")->capture_default_str();
    }
    subs.emplace_back(sub, v.mode);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (const auto& [sub, mode] : subs) {
      if (!sub->parsed()) continue;
      const bool file_mode = !o.input.empty();
      if (file_mode && !o.config.empty()) throw vap::ConfigError("use either --config or --input, not both");
      if (file_mode) return run_file_scene(o, mode == vap::harness::Mode::prompt);
      if (o.config.empty()) throw vap::ConfigError(std::string("--config is required for ") + sub->get_name());
      return run_experiment(o, mode);
    }
  } catch (const vap::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vap::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

#pragma once

// Experiment specs (JSON), sweep expansion, the worker pool, metric
// aggregation and report emission.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vap/crossview.hpp"
#include "vap/embedalign.hpp"
#include "vap/error.hpp"
#include "vap/io.hpp"
#include "vap/matcher.hpp"
#include "vap/sim/assoc.hpp"
#include "vap/sim/episode.hpp"
#include "vap/sim/runner.hpp"

namespace vap::harness {

using json = nlohmann::json;

enum class Mode { ground, prompt, simulate, ablate, align, crossview, sequential };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::ground: return "ground";
    case Mode::prompt: return "prompt";
    case Mode::simulate: return "simulate";
    case Mode::ablate: return "ablate";
    case Mode::align: return "align";
    case Mode::crossview: return "crossview";
    case Mode::sequential: return "sequential";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Enum parsing

namespace detail {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& values, const char* what) {
  for (auto v : values)
    if (to_string(v) == s) return v;
  std::string allowed;
  for (auto v : values) allowed += (allowed.empty() ? "" : ", ") + std::string(to_string(v));
  throw ConfigError(std::string("unknown ") + what + " \"" + s + "\" (expected one of: " + allowed + ")");
}

inline constexpr std::array kModes = {Mode::ground,   Mode::prompt,    Mode::simulate,  Mode::ablate,
                                      Mode::align,    Mode::crossview, Mode::sequential};
inline constexpr std::array kSelectors = {Selector::vote, Selector::average};
inline constexpr std::array kFusions = {Fusion::independent, Fusion::exact, Fusion::cluster, Fusion::pairwise};
inline constexpr std::array kPrompts = {sim::PromptMode::mask, sim::PromptMode::box, sim::PromptMode::mask_only,
                                        sim::PromptMode::rewrite_only};

}  // namespace detail

inline Mode parse_mode(const std::string& s) { return detail::parse_enum(s, detail::kModes, "mode"); }
inline Selector parse_selector(const std::string& s) { return detail::parse_enum(s, detail::kSelectors, "selector"); }
inline Fusion parse_fusion(const std::string& s) { return detail::parse_enum(s, detail::kFusions, "fusion"); }
inline sim::PromptMode parse_prompt(const std::string& s) { return detail::parse_enum(s, detail::kPrompts, "prompt"); }

// ---------------------------------------------------------------------------
// Spec

struct Sweep {
  std::vector<int> K;
  std::vector<double> alpha;
  std::vector<Selector> selector;
  std::vector<Fusion> fusion;
  std::vector<sim::PromptMode> prompt;

  bool empty() const { return K.empty() && alpha.empty() && selector.empty() && fusion.empty() && prompt.empty(); }
};

struct AlignInputs {
  std::filesystem::path a;
  std::filesystem::path b;
};

struct ExperimentSpec {
  std::string name = "experiment";
  Mode mode = Mode::simulate;
  std::uint64_t seed = 0;  // first episode seed; episode i uses seed + i
  int seeds = 100;
  bool trace = false;      // also write one JSON record per episode
  sim::SceneConfig scene;
  sim::PipelineConfig pipeline;
  sim::AssociationSetup association;
  AlignInputs align;
  Sweep sweep;
};

/// One grid point: the spec with every swept axis pinned.
struct Cell {
  std::string label;
  sim::SceneConfig scene;
  sim::PipelineConfig pipeline;
  sim::AssociationSetup association;
};

// ---------------------------------------------------------------------------
// JSON (strict: unknown keys are errors)

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for \"" + std::string(key) + "\" in " + where);
  }
}

}  // namespace detail

inline json scene_to_json(const sim::SceneConfig& c) {
  return {{"views", c.views},
          {"distractors", c.distractors},
          {"rho", c.rho},
          {"sigma", c.sigma},
          {"sigma_ref", c.sigma_ref},
          {"ref_outliers", c.ref_outliers},
          {"K", c.K},
          {"p_miss", c.p_miss},
          {"p_drift", c.p_drift},
          {"p_ctrl", c.p_ctrl},
          {"occlusion", c.occlusion},
          {"steps", c.steps},
          {"dim", c.dim},
          {"width", c.width},
          {"height", c.height},
          {"object_size", c.object_size},
          {"motion_slack", c.motion_slack},
          {"overlap_pair", c.overlap_pair},
          {"categories", c.categories},
          {"instruction", c.instruction}};
}

inline sim::SceneConfig scene_from_json(const json& j) {
  const std::string w = "\"scene\"";
  detail::check_keys(j,
                     {"views", "distractors", "rho", "sigma", "sigma_ref", "ref_outliers", "K", "p_miss", "p_drift",
                      "p_ctrl", "occlusion", "steps", "dim", "width", "height", "object_size", "motion_slack",
                      "overlap_pair", "categories", "instruction"},
                     w);
  sim::SceneConfig c;
  detail::read(j, "views", c.views, w);
  detail::read(j, "distractors", c.distractors, w);
  detail::read(j, "rho", c.rho, w);
  detail::read(j, "sigma", c.sigma, w);
  detail::read(j, "sigma_ref", c.sigma_ref, w);
  detail::read(j, "ref_outliers", c.ref_outliers, w);
  detail::read(j, "K", c.K, w);
  detail::read(j, "p_miss", c.p_miss, w);
  detail::read(j, "p_drift", c.p_drift, w);
  detail::read(j, "p_ctrl", c.p_ctrl, w);
  detail::read(j, "occlusion", c.occlusion, w);
  detail::read(j, "steps", c.steps, w);
  detail::read(j, "dim", c.dim, w);
  detail::read(j, "width", c.width, w);
  detail::read(j, "height", c.height, w);
  detail::read(j, "object_size", c.object_size, w);
  detail::read(j, "motion_slack", c.motion_slack, w);
  detail::read(j, "overlap_pair", c.overlap_pair, w);
  detail::read(j, "categories", c.categories, w);
  detail::read(j, "instruction", c.instruction, w);
  return c;
}

inline json pipeline_to_json(const sim::PipelineConfig& p) {
  return {{"selector", to_string(p.selector)},
          {"fusion", to_string(p.fusion)},
          {"prompt", to_string(p.prompt)},
          {"alpha", p.alpha},
          {"color", p.color},
          {"lambda", p.fusion_params.lambda},
          {"beta", p.fusion_params.beta},
          {"null_unary", p.fusion_params.null_unary},
          {"threshold", p.fusion_params.threshold}};
}

inline sim::PipelineConfig pipeline_from_json(const json& j) {
  const std::string w = "\"pipeline\"";
  detail::check_keys(j, {"selector", "fusion", "prompt", "alpha", "color", "lambda", "beta", "null_unary", "threshold"},
                     w);
  sim::PipelineConfig p;
  std::string selector(to_string(p.selector)), fusion(to_string(p.fusion)), prompt(to_string(p.prompt));
  detail::read(j, "selector", selector, w);
  detail::read(j, "fusion", fusion, w);
  detail::read(j, "prompt", prompt, w);
  p.selector = parse_selector(selector);
  p.fusion = parse_fusion(fusion);
  p.prompt = parse_prompt(prompt);
  detail::read(j, "alpha", p.alpha, w);
  detail::read(j, "color", p.color, w);
  detail::read(j, "lambda", p.fusion_params.lambda, w);
  detail::read(j, "beta", p.fusion_params.beta, w);
  detail::read(j, "null_unary", p.fusion_params.null_unary, w);
  detail::read(j, "threshold", p.fusion_params.threshold, w);
  return p;
}

inline json association_to_json(const sim::AssociationSetup& a) {
  return {{"views", a.views},         {"max_proposals", a.max_proposals}, {"identities", a.identities},
          {"K", a.K},                 {"sigma", a.sigma},                 {"sigma_ref", a.sigma_ref},
          {"target_visible", a.target_visible}, {"lambda", a.lambda},     {"beta", a.beta},
          {"null_unary", a.null_unary}};
}

inline sim::AssociationSetup association_from_json(const json& j) {
  const std::string w = "\"association\"";
  detail::check_keys(j,
                     {"views", "max_proposals", "identities", "K", "sigma", "sigma_ref", "target_visible", "lambda",
                      "beta", "null_unary"},
                     w);
  sim::AssociationSetup a;
  detail::read(j, "views", a.views, w);
  detail::read(j, "max_proposals", a.max_proposals, w);
  detail::read(j, "identities", a.identities, w);
  detail::read(j, "K", a.K, w);
  detail::read(j, "sigma", a.sigma, w);
  detail::read(j, "sigma_ref", a.sigma_ref, w);
  detail::read(j, "target_visible", a.target_visible, w);
  detail::read(j, "lambda", a.lambda, w);
  detail::read(j, "beta", a.beta, w);
  detail::read(j, "null_unary", a.null_unary, w);
  return a;
}

inline json sweep_to_json(const Sweep& s) {
  json j = json::object();
  if (!s.K.empty()) j["K"] = s.K;
  if (!s.alpha.empty()) j["alpha"] = s.alpha;
  auto names = [](const auto& values) {
    json a = json::array();
    for (auto v : values) a.push_back(std::string(to_string(v)));
    return a;
  };
  if (!s.selector.empty()) j["selector"] = names(s.selector);
  if (!s.fusion.empty()) j["fusion"] = names(s.fusion);
  if (!s.prompt.empty()) j["prompt"] = names(s.prompt);
  return j;
}

inline Sweep sweep_from_json(const json& j) {
  const std::string w = "\"sweep\"";
  detail::check_keys(j, {"K", "alpha", "selector", "fusion", "prompt"}, w);
  Sweep s;
  auto list = [&](const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.empty()) throw ConfigError("sweep axis \"" + std::string(key) + "\" must be a non-empty list");
    return a;
  };
  try {
    if (j.contains("K")) s.K = list("K").get<std::vector<int>>();
    if (j.contains("alpha")) s.alpha = list("alpha").get<std::vector<double>>();
    if (j.contains("selector"))
      for (const auto& v : list("selector")) s.selector.push_back(parse_selector(v.get<std::string>()));
    if (j.contains("fusion"))
      for (const auto& v : list("fusion")) s.fusion.push_back(parse_fusion(v.get<std::string>()));
    if (j.contains("prompt"))
      for (const auto& v : list("prompt")) s.prompt.push_back(parse_prompt(v.get<std::string>()));
  } catch (const json::exception&) {
    throw ConfigError("bad value in " + w);
  }
  return s;
}

inline json spec_to_json(const ExperimentSpec& s) {
  json j = {{"name", s.name},
            {"mode", to_string(s.mode)},
            {"seed", s.seed},
            {"seeds", s.seeds},
            {"trace", s.trace},
            {"scene", scene_to_json(s.scene)},
            {"pipeline", pipeline_to_json(s.pipeline)},
            {"association", association_to_json(s.association)},
            {"sweep", sweep_to_json(s.sweep)}};
  if (s.mode == Mode::align) j["align"] = {{"a", s.align.a.string()}, {"b", s.align.b.string()}};
  return j;
}

/// Relative matrix paths are resolved against base_dir.
inline ExperimentSpec spec_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j, {"name", "mode", "seed", "seeds", "trace", "scene", "pipeline", "association", "align", "sweep"},
                     "the experiment config");
  ExperimentSpec s;
  const std::string w = "the experiment config";
  detail::read(j, "name", s.name, w);
  std::string mode;
  detail::read(j, "mode", mode, w);
  if (mode.empty()) throw ConfigError("the experiment config needs a \"mode\"");
  s.mode = parse_mode(mode);
  detail::read(j, "seed", s.seed, w);
  detail::read(j, "seeds", s.seeds, w);
  detail::read(j, "trace", s.trace, w);
  if (j.contains("scene")) s.scene = scene_from_json(j.at("scene"));
  if (j.contains("pipeline")) s.pipeline = pipeline_from_json(j.at("pipeline"));
  if (j.contains("association")) s.association = association_from_json(j.at("association"));
  if (j.contains("sweep")) s.sweep = sweep_from_json(j.at("sweep"));
  if (j.contains("align")) {
    const auto& a = j.at("align");
    detail::check_keys(a, {"a", "b"}, "\"align\"");
    if (!a.contains("a") || !a.contains("b")) throw ConfigError("\"align\" needs both \"a\" and \"b\"");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    std::string pa, pb;
    detail::read(a, "a", pa, "\"align\"");
    detail::read(a, "b", pb, "\"align\"");
    s.align = {resolve(pa), resolve(pb)};
  }
  return s;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return spec_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Validation and grid expansion

/// Which sweep axes each mode accepts.
inline bool axis_allowed(Mode m, std::string_view axis) {
  switch (m) {
    case Mode::ground: return axis == "K" || axis == "selector" || axis == "fusion";
    case Mode::prompt: return axis == "K" || axis == "selector" || axis == "alpha" || axis == "prompt";
    case Mode::simulate:
    case Mode::ablate:
    case Mode::sequential: return true;
    case Mode::crossview: return axis == "K" || axis == "fusion";
    case Mode::align: return false;
  }
  return false;
}

inline void validate(const ExperimentSpec& s) {
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
    throw ConfigError("experiment name must be a non-empty file-name-safe string");
  if (s.seeds < 1) throw ConfigError("seeds must be at least 1");
  auto axis = [&](const char* name, bool used) {
    if (used && !axis_allowed(s.mode, name))
      throw ConfigError("sweep axis \"" + std::string(name) + "\" does not apply to mode " +
                        std::string(to_string(s.mode)));
  };
  axis("K", !s.sweep.K.empty());
  axis("alpha", !s.sweep.alpha.empty());
  axis("selector", !s.sweep.selector.empty());
  axis("fusion", !s.sweep.fusion.empty());
  axis("prompt", !s.sweep.prompt.empty());
  if (s.mode == Mode::ablate && s.sweep.empty()) throw ConfigError("mode ablate needs at least one sweep axis");
  for (int k : s.sweep.K)
    if (k < 1) throw ConfigError("sweep K values must be >= 1");
  for (double a : s.sweep.alpha)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep alpha values must lie in [0, 1]");
  if (s.mode == Mode::align) {
    if (s.align.a.empty() || s.align.b.empty()) throw ConfigError("mode align needs \"align\": {\"a\", \"b\"}");
    return;
  }
  if (s.mode == Mode::crossview) {
    sim::random_association(0, s.association);
    return;
  }
  sim::validate(s.scene);
  (void)s.pipeline.style();
  if (s.mode == Mode::sequential && s.scene.targets() < 2)
    throw ConfigError("mode sequential needs at least two scene categories (one target each)");
}

inline std::vector<Cell> expand(const ExperimentSpec& s) {
  std::vector<Cell> cells = {{"", s.scene, s.pipeline, s.association}};
  auto label = [](std::string& l, const std::string& part) { l += (l.empty() ? "" : ",") + part; };
  auto grow = [&](const auto& values, auto apply) {
    if (values.empty()) return;
    std::vector<Cell> next;
    for (const auto& c : cells)
      for (const auto& v : values) {
        Cell n = c;
        apply(n, v);
        next.push_back(std::move(n));
      }
    cells = std::move(next);
  };
  grow(s.sweep.K, [&](Cell& c, int k) {
    c.scene.K = k;
    c.association.K = k;
    label(c.label, "K=" + std::to_string(k));
  });
  grow(s.sweep.alpha, [&](Cell& c, double a) {
    c.pipeline.alpha = a;
    std::ostringstream os;
    os << a;
    label(c.label, "alpha=" + os.str());
  });
  grow(s.sweep.selector, [&](Cell& c, Selector v) {
    c.pipeline.selector = v;
    label(c.label, "selector=" + std::string(to_string(v)));
  });
  grow(s.sweep.fusion, [&](Cell& c, Fusion v) {
    c.pipeline.fusion = v;
    label(c.label, "fusion=" + std::string(to_string(v)));
  });
  grow(s.sweep.prompt, [&](Cell& c, sim::PromptMode v) {
    c.pipeline.prompt = v;
    label(c.label, "prompt=" + std::string(to_string(v)));
  });
  for (auto& c : cells)
    if (c.label.empty()) c.label = "base";
  return cells;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string cell_fingerprint(const ExperimentSpec& s, const Cell& c) {
  json j = {{"mode", to_string(s.mode)}, {"seed", s.seed}, {"seeds", s.seeds}};
  if (s.mode == Mode::align) {
    j["align"] = {{"a", s.align.a.string()}, {"b", s.align.b.string()}};
  } else if (s.mode == Mode::crossview) {
    j["association"] = association_to_json(c.association);
    j["fusion"] = to_string(c.pipeline.fusion);
    j["threshold"] = c.pipeline.fusion_params.threshold;
  } else {
    j["scene"] = scene_to_json(c.scene);
    j["pipeline"] = pipeline_to_json(c.pipeline);
  }
  return fingerprint(j.dump());
}

// ---------------------------------------------------------------------------
// Worker pool

inline int resolve_workers(std::optional<int> requested) {
  if (requested) {
    if (*requested < 1) throw ConfigError("--workers must be at least 1");
    return *requested;
  }
  if (const char* env = std::getenv("VAP_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw ConfigError("VAP_WORKERS must be a positive integer");
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1, workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Rows

struct ReportRow {
  std::string name;
  std::string mode;
  std::string cell;
  std::string fingerprint;
  int episodes = 0;
  std::optional<double> sr;
  std::optional<double> cmr;
  std::optional<double> fail;
  std::optional<double> case1;
  std::optional<double> case2;
  std::optional<double> case3;
  std::optional<double> retrieval;       // percent of views whose t = 0 winner is the target
  std::optional<double> identification;  // percent of views where the policy reads the target from the prompt
  std::vector<std::pair<std::string, std::optional<double>>> extra;  // mode-specific, fixed order per mode
  double wall_seconds = 0.0;

  std::optional<double> metric(std::string_view key) const {
    for (const auto& [k, v] : extra)
      if (k == key) return v;
    return std::nullopt;
  }
};

namespace detail {

inline double pct(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : 100.0 * num / den; }

struct Counts {
  std::size_t episodes = 0, success = 0, moved = 0, fail = 0, c1 = 0, c2 = 0, c3 = 0;
  std::size_t views = 0, retrieved = 0, identified = 0;

  void add_views(const std::vector<std::optional<int>>& ids, int target, std::size_t& hit) {
    for (const auto& id : ids) hit += id == target;
  }

  void add(const sim::EpisodeReport& r) {
    ++episodes;
    success += r.success;
    moved += r.target_moved;
    if (!r.success) {
      ++fail;
      c1 += r.failure_case == sim::FailureCase::case1;
      c2 += r.failure_case == sim::FailureCase::case2;
      c3 += r.failure_case == sim::FailureCase::case3;
    }
    views += r.initial_selection.size();
    add_views(r.initial_selection, r.target, retrieved);
    add_views(r.highlighted, r.target, identified);
  }

  void fill(ReportRow& row) const {
    row.episodes = static_cast<int>(episodes);
    row.sr = pct(success, episodes);
    row.cmr = pct(moved, episodes);
    row.fail = pct(fail, episodes);
    if (fail > 0) {
      row.case1 = pct(c1, fail);
      row.case2 = pct(c2, fail);
      row.case3 = pct(c3, fail);
    }
    row.retrieval = pct(retrieved, views);
    row.identification = pct(identified, views);
  }
};

inline sim::SceneConfig seeded(sim::SceneConfig c, const ExperimentSpec& s, std::size_t i) {
  c.seed = s.seed + i;
  return c;
}

}  // namespace detail

struct CellResult {
  ReportRow row;
  std::vector<json> episodes;  // filled when the spec asks for a trace
};

inline json report_to_json(const sim::EpisodeReport& r) {
  auto ids = [](const std::vector<std::optional<int>>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
    return a;
  };
  json trace = json::array();
  for (const auto& step : r.trace) trace.push_back(ids(step));
  return {{"success", r.success},
          {"target_moved", r.target_moved},
          {"failure_case", to_string(r.failure_case)},
          {"target", r.target},
          {"acted_on", r.acted_on ? json(*r.acted_on) : json(nullptr)},
          {"initial_selection", ids(r.initial_selection)},
          {"highlighted", ids(r.highlighted)},
          {"trace", trace},
          {"precondition_failed", r.precondition_failed}};
}

inline CellResult run_cell(const ExperimentSpec& s, const Cell& cell, int workers) {
  CellResult out;
  auto& row = out.row;
  row.name = s.name;
  row.mode = std::string(to_string(s.mode));
  row.cell = cell.label;
  row.fingerprint = cell_fingerprint(s, cell);
  const auto n = static_cast<std::size_t>(s.seeds);

  switch (s.mode) {
    case Mode::simulate:
    case Mode::ablate: {
      std::vector<sim::EpisodeReport> reports(n);
      parallel_for(n, workers, [&](std::size_t i) {
        reports[i] = sim::run_episode(detail::seeded(cell.scene, s, i), cell.pipeline);
      });
      detail::Counts counts;
      for (const auto& r : reports) {
        counts.add(r);
        if (s.trace) out.episodes.push_back(report_to_json(r));
      }
      counts.fill(row);
      break;
    }
    case Mode::ground:
    case Mode::prompt: {
      std::vector<std::vector<std::optional<int>>> picked(n), read(n);
      std::vector<int> targets(n);
      parallel_for(n, workers, [&](std::size_t i) {
        const auto ep = sim::gen_episode(detail::seeded(cell.scene, s, i));
        targets[i] = ep.target();
        picked[i] = sim::winner_identities(ep, sim::ground_scene(ep, ep.references.front(), cell.pipeline));
        if (s.mode == Mode::prompt) read[i] = sim::probe_prompt(ep, cell.pipeline);
      });
      std::size_t views = 0, hit = 0, seen = 0;
      for (std::size_t i = 0; i < n; ++i) {
        views += picked[i].size();
        for (const auto& id : picked[i]) hit += id == targets[i];
        for (const auto& id : read[i]) seen += id == targets[i];
      }
      row.episodes = static_cast<int>(n);
      row.retrieval = detail::pct(hit, views);
      if (s.mode == Mode::prompt) row.identification = detail::pct(seen, views);
      break;
    }
    case Mode::sequential: {
      std::vector<sim::SequentialReport> reports(n);
      parallel_for(n, workers, [&](std::size_t i) {
        const auto ep = sim::gen_episode(detail::seeded(cell.scene, s, i));
        reports[i] = sim::run_sequential(ep, sim::default_subgoals(ep), cell.pipeline);
      });
      std::size_t ok = 0, wrong = 0, others = 0;
      detail::Counts counts;
      for (const auto& r : reports) {
        ok += r.all_success;
        wrong += r.wrong_object;
        others += r.others;
        for (const auto& step : r.steps) counts.add(step);
        if (s.trace) {
          json steps = json::array();
          for (const auto& step : r.steps) steps.push_back(report_to_json(step));
          out.episodes.push_back({{"all_success", r.all_success}, {"wrong_object", r.wrong_object},
                                  {"others", r.others}, {"subgoals", steps}});
        }
      }
      row.episodes = static_cast<int>(n);
      row.sr = detail::pct(ok, n);
      row.fail = 100.0 - *row.sr;
      row.retrieval = detail::pct(counts.retrieved, counts.views);
      row.extra = {{"subgoal_sr", detail::pct(counts.success, counts.episodes)},
                   {"wrong_object", detail::pct(wrong, n)},
                   {"others", detail::pct(others, n)}};
      break;
    }
    case Mode::crossview: {
      std::vector<int> agree(n), violation(n);
      std::vector<std::size_t> views(n), hits(n);
      std::vector<double> score(n), gap(n);
      parallel_for(n, workers, [&](std::size_t i) {
        const auto li = sim::random_association(s.seed + i, cell.association);
        const auto& inst = li.instance;
        const auto best = solve_exact(inst);
        Assignment m;
        switch (cell.pipeline.fusion) {
          case Fusion::exact: m = best; break;
          case Fusion::cluster: m = solve_cluster(inst, cell.pipeline.fusion_params.threshold); break;
          case Fusion::pairwise: m = solve_pairwise(inst); break;
          case Fusion::independent:
            for (const auto& props : inst.per_view)
              m.choices.push_back(vote_select(embeddings_of(props), inst.references).winner_index);
            break;
        }
        const double best_score = score_assignment(inst, best);
        score[i] = score_assignment(inst, m);
        gap[i] = best_score - score[i];
        agree[i] = m == best;
        violation[i] = score[i] > best_score + 1e-9;
        views[i] = inst.views();
        for (std::size_t v = 0; v < inst.views(); ++v) hits[i] += m.choices[v] && li.identity[v][*m.choices[v]] == 0;
      });
      std::size_t a = 0, bad = 0, vs = 0, hs = 0;
      double total = 0.0, total_gap = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        a += agree[i];
        bad += violation[i];
        vs += views[i];
        hs += hits[i];
        total += score[i];
        total_gap += gap[i];
      }
      row.episodes = static_cast<int>(n);
      row.retrieval = detail::pct(hs, vs);
      row.extra = {{"agreement", detail::pct(a, n)},
                   {"mean_score", total / n},
                   {"mean_gap", total_gap / n},
                   {"dominance_violations", static_cast<double>(bad)}};
      break;
    }
    case Mode::align: {
      const auto a = io::load_embedding_matrix(s.align.a);
      const auto b = io::load_embedding_matrix(s.align.b);
      const auto [mean, sd] = rowwise_cosine(a, b);
      std::optional<double> cka;
      try {
        cka = linear_cka(a, b);
      } catch (const UndefinedMetric&) {
      }
      row.episodes = static_cast<int>(a.rows());
      row.extra = {{"mean_cosine", mean}, {"std_cosine", sd}, {"cka", cka}, {"knn_top1", knn_top1(a, b)}};
      break;
    }
  }
  return out;
}

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<std::vector<json>> episodes;  // per row, when traced
};

inline ExperimentResult run_experiment(const ExperimentSpec& s, int workers = 1) {
  validate(s);
  ExperimentResult out;
  for (const auto& cell : expand(s)) {
    const auto start = std::chrono::steady_clock::now();
    auto r = run_cell(s, cell, workers);
    r.row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.rows.push_back(std::move(r.row));
    out.episodes.push_back(std::move(r.episodes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string cell_text(const std::optional<double>& v) { return v ? number(*v) : ""; }

inline json cell_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace detail

inline std::vector<std::string> columns(const std::vector<ReportRow>& rows) {
  std::vector<std::string> cols = {"name", "mode", "cell",    "fingerprint", "episodes",  "sr",       "cmr",
                                   "fail", "case1", "case2", "case3",       "retrieval", "identification"};
  if (!rows.empty())
    for (const auto& [k, v] : rows.front().extra) cols.push_back(k);
  return cols;
}

inline json row_to_json(const ReportRow& r) {
  json j = {{"name", r.name},
            {"mode", r.mode},
            {"cell", r.cell},
            {"fingerprint", r.fingerprint},
            {"episodes", r.episodes},
            {"sr", detail::cell_json(r.sr)},
            {"cmr", detail::cell_json(r.cmr)},
            {"fail", detail::cell_json(r.fail)},
            {"case1", detail::cell_json(r.case1)},
            {"case2", detail::cell_json(r.case2)},
            {"case3", detail::cell_json(r.case3)},
            {"retrieval", detail::cell_json(r.retrieval)},
            {"identification", detail::cell_json(r.identification)}};
  for (const auto& [k, v] : r.extra) j[k] = detail::cell_json(v);
  return j;
}

/// CSV body without the timestamp line.
inline std::string to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  const auto cols = columns(rows);
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << "\n";
  for (const auto& r : rows) {
    os << detail::csv_escape(r.name) << "," << r.mode << "," << detail::csv_escape(r.cell) << "," << r.fingerprint
       << "," << r.episodes;
    for (const auto* v : {&r.sr, &r.cmr, &r.fail, &r.case1, &r.case2, &r.case3, &r.retrieval, &r.identification})
      os << "," << detail::cell_text(*v);
    for (const auto& [k, v] : r.extra) os << "," << detail::cell_text(v);
    os << "\n";
  }
  return os.str();
}

inline std::string to_jsonl(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += row_to_json(r).dump() + "\n";
  return out;
}

struct ReportPaths {
  std::filesystem::path csv, jsonl, timing, episodes;
};

/// Writes <name>.csv, <name>.jsonl and <name>.timing.csv (plus
/// <name>.episodes.jsonl for traced runs) under out_dir. The first line of
/// the CSV and JSONL files carries the generation time; everything after it
/// is a function of the spec alone.
inline ReportPaths write_reports(const ExperimentSpec& s, const ExperimentResult& result,
                                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const auto stamp = detail::timestamp();
  ReportPaths p{out_dir / (s.name + ".csv"), out_dir / (s.name + ".jsonl"), out_dir / (s.name + ".timing.csv"), {}};

  auto write_text = [](const std::filesystem::path& path, const std::string& text) {
    io::write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  };
  write_text(p.csv, "# generated_at=" + stamp + "\n" + to_csv(result.rows));
  write_text(p.jsonl, json({{"generated_at", stamp}, {"spec", spec_to_json(s)}}).dump() + "\n" + to_jsonl(result.rows));

  std::string timing = "cell,fingerprint,wall_seconds\n";
  for (const auto& r : result.rows)
    timing += detail::csv_escape(r.cell) + "," + r.fingerprint + "," + detail::number(r.wall_seconds) + "\n";
  write_text(p.timing, timing);

  if (s.trace) {
    p.episodes = out_dir / (s.name + ".episodes.jsonl");
    std::string text;
    for (std::size_t c = 0; c < result.rows.size(); ++c)
      for (std::size_t i = 0; i < result.episodes[c].size(); ++i)
        text += json({{"cell", result.rows[c].cell}, {"seed", s.seed + i}, {"report", result.episodes[c][i]}}).dump() +
                "\n";
    write_text(p.episodes, text);
  }
  return p;
}

}  // namespace vap::harness

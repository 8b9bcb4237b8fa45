#pragma once

// Synthetic tabletop episodes. Each personal target comes with same-category
// distractors whose identity embeddings sit at a fixed cosine rho from the
// target. Objects are flat-colored ellipses on a grid, one layout per camera,
// drifting back and forth along a fixed direction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vap/error.hpp"
#include "vap/grounder.hpp"
#include "vap/scene.hpp"
#include "vap/sim/random.hpp"

namespace vap::sim {

struct SceneConfig {
  int views = 1;
  int distractors = 3;     // same-category distractors per target
  double rho = 0.5;        // cosine between target and distractor identities
  double sigma = 0.1;      // observation noise on proposal embeddings
  double sigma_ref = 0.1;  // noise on reference embeddings
  int ref_outliers = 0;    // references replaced by a view of a distractor
  int K = 5;
  double p_miss = 0.0;     // detector drops a target, per view
  double p_drift = 0.0;    // tracker jumps to another instance, per step
  double p_ctrl = 0.0;     // control failure given the right object
  double occlusion = 0.0;  // target hidden in a view for the whole episode
  int steps = 6;
  std::uint64_t seed = 0;

  int dim = 32;
  int width = 80;
  int height = 60;
  int object_size = 12;
  int motion_slack = 3;
  bool overlap_pair = false;  // park one distractor diagonally against the target
  std::vector<std::string> categories = {"cup"};  // one target per category
  std::string instruction;    // overrides the default single-target instruction

  int targets() const noexcept { return static_cast<int>(categories.size()); }
  int objects() const noexcept { return targets() * (1 + distractors); }
  int cell() const noexcept { return object_size + 2 * motion_slack + 2; }
};

inline void validate(const SceneConfig& c) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must be a probability in [0,1]");
  };
  prob(c.p_miss, "p_miss");
  prob(c.p_drift, "p_drift");
  prob(c.p_ctrl, "p_ctrl");
  prob(c.occlusion, "occlusion");
  if (c.views < 1) throw ConfigError("views must be >= 1");
  if (c.distractors < 0) throw ConfigError("distractors must be >= 0");
  if (!(c.rho >= 0.0 && c.rho < 1.0)) throw ConfigError("rho must lie in [0,1)");
  if (!(c.sigma >= 0.0) || !(c.sigma_ref >= 0.0)) throw ConfigError("noise levels must be >= 0");
  if (c.K < 1) throw ConfigError("K must be >= 1");
  if (c.ref_outliers < 0 || c.ref_outliers > c.K) throw ConfigError("ref_outliers must lie in [0, K]");
  if (c.steps < 1) throw ConfigError("steps must be >= 1");
  if (c.dim < 2) throw ConfigError("dim must be >= 2");
  if (c.object_size < 2 || c.motion_slack < 0) throw ConfigError("bad object geometry");
  if (c.categories.empty()) throw ConfigError("at least one target category is required");
  if (c.overlap_pair && c.distractors < 1) throw ConfigError("overlap_pair needs a distractor");
  const int cols = c.width / c.cell();
  const int rows = c.height / c.cell();
  const int cells_needed = c.objects() + (c.overlap_pair ? 2 : 0);
  if (c.overlap_pair && (cols < 2 || rows < 2)) throw ConfigError("overlap_pair needs a 2x2 block of grid cells");
  if (cols * rows < cells_needed)
    throw ConfigError("scene too small: " + std::to_string(cells_needed) + " grid cells needed, " +
                      std::to_string(cols * rows) + " available");
}

struct Placement {
  int x = 0;  // top-left corner at t = 0
  int y = 0;
  int vx = 0;
  int vy = 0;
  bool visible = true;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct SceneObject {
  int index = 0;
  std::string id;
  std::string category;
  int target_of = -1;  // index into Episode::targets when this is a target, else -1
  Embedding identity;
  std::vector<Embedding> observed;  // per view
  std::vector<Placement> layout;    // per view
  Rgb color{};

  bool is_target() const noexcept { return target_of >= 0; }
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Episode {
  SceneConfig config;
  std::vector<SceneObject> objects;
  std::vector<int> targets;  // object index per target
  std::vector<ReferenceSet> references;
  std::vector<std::string> instructions;

  int target() const { return targets.front(); }
  int find(const std::string& id) const {
    for (const auto& o : objects)
      if (o.id == id) return o.index;
    return -1;
  }
};

inline constexpr Rgb kBackground = {30, 30, 30};

/// Signed displacement along the motion direction: a triangle wave with
/// amplitude `slack` that starts at 0.
inline int motion_offset(int t, int slack) {
  if (slack == 0) return 0;
  const int period = 4 * slack;
  const int phase = (t + slack) % period;
  return slack - std::abs(phase - 2 * slack);
}

inline BoundingBox object_box(const Episode& ep, int object, int view, int t) {
  const auto& p = ep.objects[object].layout[view];
  const int off = motion_offset(t, ep.config.motion_slack);
  const int x = p.x + p.vx * off;
  const int y = p.y + p.vy * off;
  return {x, y, x + ep.config.object_size - 1, y + ep.config.object_size - 1};
}

/// Pixels whose centres fall inside the ellipse inscribed in the box.
inline Mask ellipse_mask(int width, int height, const BoundingBox& box) {
  Mask m(width, height);
  const double rx = box.width() / 2.0;
  const double ry = box.height() / 2.0;
  for (int y = box.y_min; y <= box.y_max; ++y)
    for (int x = box.x_min; x <= box.x_max; ++x) {
      const double dx = (x - box.x_min + 0.5 - rx) / rx;
      const double dy = (y - box.y_min + 0.5 - ry) / ry;
      if (dx * dx + dy * dy <= 1.0) m.set(x, y);
    }
  return m;
}

/// Objects taken out of the scene (sequential execution).
using Removed = std::vector<bool>;

inline bool present(const Episode& ep, int object, int view, const Removed& removed) {
  if (!removed.empty() && removed[object]) return false;
  return ep.objects[object].layout[view].visible;
}

inline Mask object_mask(const Episode& ep, int object, int view, int t) {
  return ellipse_mask(ep.config.width, ep.config.height, object_box(ep, object, view, t));
}

inline RasterImage render(const Episode& ep, int view, int t, const Removed& removed = {}) {
  RasterImage img(ep.config.width, ep.config.height, kBackground);
  for (const auto& o : ep.objects) {
    if (!present(ep, o.index, view, removed)) continue;
    const auto box = object_box(ep, o.index, view, t);
    const auto mask = ellipse_mask(ep.config.width, ep.config.height, box);
    for (int y = box.y_min; y <= box.y_max; ++y)
      for (int x = box.x_min; x <= box.x_max; ++x)
        if (mask.at(x, y)) img.set(x, y, o.color);
  }
  return img;
}

inline std::vector<RasterImage> render_views(const Episode& ep, int t, const Removed& removed = {}) {
  std::vector<RasterImage> out;
  for (int v = 0; v < ep.config.views; ++v) out.push_back(render(ep, v, t, removed));
  return out;
}

/// Object whose mask overlaps `mask` the most at step t, or nullopt when it
/// touches no visible object. Ties go to the lowest object index.
inline std::optional<int> identify_mask(const Episode& ep, const Mask& mask, int view, int t,
                                        const Removed& removed = {}) {
  std::optional<int> best;
  std::size_t best_overlap = 0;
  for (const auto& o : ep.objects) {
    if (!present(ep, o.index, view, removed)) continue;
    const auto n = object_mask(ep, o.index, view, t).overlap(mask);
    if (n > best_overlap) {
      best_overlap = n;
      best = o.index;
    }
  }
  return best;
}

inline std::optional<int> identify_box(const Episode& ep, const BoundingBox& box, int view, int t,
                                       const Removed& removed = {}) {
  for (const auto& o : ep.objects)
    if (present(ep, o.index, view, removed) && object_box(ep, o.index, view, t) == box) return o.index;
  return std::nullopt;
}

namespace detail {

inline Embedding random_unit(Rng& rng, int dim) {
  for (;;) {
    const auto v = rng.normal_vector(static_cast<std::size_t>(dim));
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq > 1e-12) return Embedding::normalize(v);
  }
}

// normalize(rho * t + sqrt(1 - rho^2) * u) with u a unit vector orthogonal to t.
inline Embedding at_cosine(const Embedding& t, double rho, Rng& rng) {
  const std::size_t d = t.dim();
  for (;;) {
    auto u = rng.normal_vector(d);
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) proj += u[i] * t[i];
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      u[i] -= proj * t[i];
      sq += u[i] * u[i];
    }
    if (sq < 1e-12) continue;
    const double un = std::sqrt(sq);
    const double s = std::sqrt(1.0 - rho * rho);
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rho * t[i] + s * u[i] / un;
    return Embedding::normalize(v);
  }
}

// normalize(base + sigma * n); sigma == 0 returns `base` unchanged. The noise
// vector is drawn either way so the stream position does not depend on sigma.
inline Embedding perturb(const Embedding& base, double sigma, Rng& rng) {
  const auto n = rng.normal_vector(base.dim());
  if (sigma == 0.0) return base;
  std::vector<double> v(base.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = base[i] + sigma * n[i];
  return Embedding::normalize(v);
}

}  // namespace detail

inline std::string default_instruction(const std::string& category) { return "pick up my " + category; }

/// Deterministic function of the configuration (including its seed).
inline Episode gen_episode(const SceneConfig& cfg) {
  validate(cfg);
  Episode ep;
  ep.config = cfg;
  const int per_target = 1 + cfg.distractors;

  // Identities.
  Rng id_rng(cfg.seed, Stream::identity);
  for (int j = 0; j < cfg.targets(); ++j) {
    const Embedding t = detail::random_unit(id_rng, cfg.dim);
    for (int k = 0; k < per_target; ++k) {
      SceneObject o;
      o.index = static_cast<int>(ep.objects.size());
      o.id = "o" + std::to_string(o.index);
      o.category = cfg.categories[j];
      o.target_of = k == 0 ? j : -1;
      o.identity = k == 0 ? t : detail::at_cosine(t, cfg.rho, id_rng);
      ep.objects.push_back(std::move(o));
    }
    ep.targets.push_back(j * per_target);
  }

  // Observed embeddings, per object and view.
  for (auto& o : ep.objects)
    for (int v = 0; v < cfg.views; ++v) {
      Rng rng(cfg.seed, Stream::observation, {static_cast<std::uint64_t>(o.index), static_cast<std::uint64_t>(v)});
      o.observed.push_back(detail::perturb(o.identity, cfg.sigma, rng));
    }

  // References. Reference k of target j only depends on (seed, j, k), so a
  // smaller K is a prefix of a larger one.
  for (int j = 0; j < cfg.targets(); ++j) {
    const auto& target = ep.objects[ep.targets[j]];
    std::vector<Embedding> refs;
    for (int k = 0; k < cfg.K; ++k) {
      Rng rng(cfg.seed, Stream::reference, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k)});
      const std::uint64_t pick = rng.below(static_cast<std::uint64_t>(std::max(1, cfg.distractors)));
      if (k < cfg.ref_outliers && cfg.distractors > 0) {
        const auto& wrong = ep.objects[ep.targets[j] + 1 + static_cast<int>(pick)];
        refs.push_back(detail::perturb(wrong.identity, cfg.sigma_ref, rng));
      } else {
        refs.push_back(detail::perturb(target.identity, cfg.sigma_ref, rng));
      }
    }
    ep.references.emplace_back(target.id, target.category, std::move(refs));
  }

  // Instructions.
  for (int j = 0; j < cfg.targets(); ++j) {
    if (j == 0 && !cfg.instruction.empty()) {
      const auto q = parse_category(cfg.instruction);
      if (q.category != cfg.categories[0])
        throw ConfigError("instruction category \"" + q.category + "\" differs from scene category \"" +
                          cfg.categories[0] + "\"");
      ep.instructions.push_back(cfg.instruction);
    } else {
      ep.instructions.push_back(default_instruction(cfg.categories[j]));
    }
  }

  // Colors.
  Rng color_rng(cfg.seed, Stream::placement, {0xC0L});
  for (auto& o : ep.objects)
    for (auto& ch : o.color) ch = static_cast<std::uint8_t>(60 + color_rng.below(141));

  // Layout, independently per camera.
  const int cell = cfg.cell();
  const int cols = cfg.width / cell;
  const int rows = cfg.height / cell;
  static constexpr int kDirs[8][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
  for (auto& o : ep.objects) o.layout.resize(static_cast<std::size_t>(cfg.views));
  for (int v = 0; v < cfg.views; ++v) {
    Rng rng(cfg.seed, Stream::placement, {1, static_cast<std::uint64_t>(v)});
    std::vector<bool> used(static_cast<std::size_t>(cols * rows), false);
    auto anchor = [&](int c, int r) { return std::pair{c * cell + 1 + cfg.motion_slack, r * cell + 1 + cfg.motion_slack}; };
    auto direction = [&]() {
      const auto d = kDirs[rng.below(8)];
      return std::pair{d[0], d[1]};
    };

    std::size_t next = 0;
    if (cfg.overlap_pair) {
      const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(cols - 1)));
      const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(rows - 1)));
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) used[static_cast<std::size_t>((r + dr) * cols + c + dc)] = true;
      const auto [x, y] = anchor(c, r);
      const auto [vx, vy] = direction();
      const int shift = (3 * cfg.object_size) / 4;
      ep.objects[ep.targets[0]].layout[v] = {x, y, vx, vy, true};
      ep.objects[ep.targets[0] + 1].layout[v] = {x + shift, y + shift, vx, vy, true};
    }
    std::vector<int> free_cells;
    for (int k = 0; k < cols * rows; ++k)
      if (!used[static_cast<std::size_t>(k)]) free_cells.push_back(k);
    rng.shuffle(free_cells);
    for (auto& o : ep.objects) {
      if (cfg.overlap_pair && (o.index == ep.targets[0] || o.index == ep.targets[0] + 1)) continue;
      const int k = free_cells.at(next++);
      const auto [x, y] = anchor(k % cols, k / cols);
      const auto [vx, vy] = direction();
      o.layout[v] = {x, y, vx, vy, true};
    }
  }

  // Occlusion: a target may be hidden in some views, never in all of them.
  for (int j = 0; j < cfg.targets(); ++j) {
    auto& target = ep.objects[ep.targets[j]];
    bool any_visible = false;
    for (int v = 0; v < cfg.views; ++v) {
      Rng rng(cfg.seed, Stream::occlusion, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(v)});
      target.layout[v].visible = !rng.bernoulli(cfg.occlusion);
      any_visible = any_visible || target.layout[v].visible;
    }
    if (!any_visible) {
      Rng rng(cfg.seed, Stream::occlusion, {static_cast<std::uint64_t>(j), 0xFFFF});
      target.layout[rng.below(static_cast<std::uint64_t>(cfg.views))].visible = true;
    }
  }
  return ep;
}

}  // namespace vap::sim

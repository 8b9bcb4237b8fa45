#pragma once

// Episode execution: ground at t = 0, track and prompt every step, hand the
// prompted observation to a surrogate policy at the last step, and label the
// outcome with the failure taxonomy.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vap/crossview.hpp"
#include "vap/grounder.hpp"
#include "vap/matcher.hpp"
#include "vap/prompter.hpp"
#include "vap/sim/episode.hpp"
#include "vap/sim/mocks.hpp"
#include "vap/sim/random.hpp"

namespace vap::sim {

/// Prompting variants: highlight + rewrite, box highlight + rewrite,
/// highlight with the original instruction, rewrite without highlight.
enum class PromptMode { mask, box, mask_only, rewrite_only };

inline std::string_view to_string(PromptMode m) {
  switch (m) {
    case PromptMode::mask: return "mask";
    case PromptMode::box: return "box";
    case PromptMode::mask_only: return "mask-only";
    case PromptMode::rewrite_only: return "rewrite-only";
  }
  return "?";
}

struct PipelineConfig {
  Selector selector = Selector::vote;
  Fusion fusion = Fusion::independent;
  FusionParams fusion_params;
  PromptMode prompt = PromptMode::mask;
  double alpha = 0.5;
  std::string color = "red";

  PromptStyle style() const {
    auto s = make_style(color, alpha, prompt == PromptMode::box ? PromptGeometry::box : PromptGeometry::mask);
    s.highlight = prompt != PromptMode::rewrite_only;
    s.rewrite = prompt != PromptMode::mask_only;
    return s;
  }
};

enum class FailureCase { none, case1, case2, case3 };

inline std::string_view to_string(FailureCase c) {
  switch (c) {
    case FailureCase::none: return "none";
    case FailureCase::case1: return "case1";
    case FailureCase::case2: return "case2";
    case FailureCase::case3: return "case3";
  }
  return "?";
}

struct PolicyDecision {
  std::optional<int> acted_on;                    // nullopt only when nothing is left to act on
  bool success = false;
  bool completed = false;                         // the motion itself went through
  std::vector<std::optional<int>> highlighted;    // per view, what the policy read from the prompt
};

struct EpisodeReport {
  bool success = false;
  bool target_moved = false;
  FailureCase failure_case = FailureCase::none;
  int target = -1;
  std::optional<int> acted_on;
  std::vector<std::optional<int>> initial_selection;   // per view winner identity at t = 0
  std::vector<std::vector<std::optional<int>>> trace;  // [step][view] object under the mask
  std::vector<std::optional<int>> highlighted;         // per view, the policy's reading of the prompt
  bool precondition_failed = false;                    // target already gone (sequential only)

  friend bool operator==(const EpisodeReport&, const EpisodeReport&) = default;
};

/// Stand-in for a frozen policy. It follows the tint only when the
/// instruction names it ("the <color> ..."). In each view the highlighted
/// object is the one whose ground-truth mask the tint touches; a tint touching
/// several objects is ambiguous and resolved by a coin flip. The policy acts
/// on the object highlighted in most views (ties: lowest index), or on a
/// random same-category object when nothing usable is highlighted.
inline PolicyDecision surrogate_policy(const Observation& prompted, const Episode& ep, int target, int step,
                                       const std::string& color_word, int round = 0, const Removed& removed = {}) {
  using detail::u64;
  const auto& cfg = ep.config;
  PolicyDecision d;
  d.highlighted.assign(prompted.views.size(), std::nullopt);
  const auto& category = ep.objects[target].category;
  const bool follows_tint = prompted.instruction.find("the " + color_word + " ") != std::string::npos;

  if (follows_tint) {
    for (std::size_t v = 0; v < prompted.views.size(); ++v) {
      const int view = static_cast<int>(v);
      const auto clean = render(ep, view, step, removed);
      const auto& seen = prompted.views[v];
      std::vector<int> touched;
      for (const auto& o : ep.objects) {
        if (o.category != category || !present(ep, o.index, view, removed)) continue;
        const auto box = object_box(ep, o.index, view, step);
        const auto mask = ellipse_mask(cfg.width, cfg.height, box);
        bool hit = false;
        for (int y = box.y_min; y <= box.y_max && !hit; ++y)
          for (int x = box.x_min; x <= box.x_max && !hit; ++x)
            hit = mask.at(x, y) && seen.at(x, y) != clean.at(x, y);
        if (hit) touched.push_back(o.index);
      }
      if (touched.size() == 1) {
        d.highlighted[v] = touched.front();
      } else if (touched.size() > 1) {
        Rng rng(cfg.seed, Stream::policy, {u64(round), u64(step), u64(view), 1});
        d.highlighted[v] = touched[rng.below(touched.size())];
      }
    }
  }

  std::map<int, int> votes;
  for (const auto& h : d.highlighted)
    if (h) ++votes[*h];
  if (!votes.empty()) {
    int best_votes = 0;
    for (const auto& [obj, n] : votes)
      if (n > best_votes) {
        best_votes = n;
        d.acted_on = obj;
      }
  } else {
    std::vector<int> pool;
    for (const auto& o : ep.objects)
      if (o.category == category && (removed.empty() || !removed[o.index])) pool.push_back(o.index);
    if (!pool.empty()) {
      Rng rng(cfg.seed, Stream::policy, {u64(round), u64(step), 2});
      d.acted_on = pool[rng.below(pool.size())];
    }
  }

  Rng ctrl(cfg.seed, Stream::policy, {u64(round), 3});
  d.completed = d.acted_on.has_value() && !ctrl.bernoulli(cfg.p_ctrl);
  d.success = d.completed && d.acted_on == target;
  return d;
}

/// Failure label from the prompts in place at the action step.
inline FailureCase classify(bool success, int views, const std::vector<std::optional<int>>& prompted_identity,
                            const std::vector<bool>& has_prompt, int target) {
  if (success) return FailureCase::none;
  bool any = false, all_target = true;
  for (std::size_t v = 0; v < prompted_identity.size(); ++v) {
    if (!has_prompt[v]) continue;
    any = true;
    all_target = all_target && prompted_identity[v] == target;
  }
  if (any && all_target) return FailureCase::case3;
  return views == 1 ? FailureCase::case1 : FailureCase::case2;
}

/// Grounding only, at t = 0: returns the per-view winner identities.
inline GroundingOutcome ground_scene(const Episode& ep, const ReferenceSet& refs, const PipelineConfig& pipe,
                                     int round = 0, const Removed& removed = {}) {
  const auto views = render_views(ep, 0, removed);
  const MockDetector detector(ep, 0, round, removed);
  const MockSegmenter segmenter(ep, 0, removed);
  auto g = ground_initial(views, refs, detector, segmenter, pipe.selector);
  return fuse_views(std::move(g), views, refs, segmenter, pipe.fusion, pipe.fusion_params);
}

inline std::vector<std::optional<int>> winner_identities(const Episode& ep, const GroundingOutcome& g,
                                                         const Removed& removed = {}) {
  std::vector<std::optional<int>> out;
  for (const auto& v : g.per_view)
    out.push_back(v.winner ? identify_box(ep, v.winner->box(), v.view_index, 0, removed) : std::nullopt);
  return out;
}

/// Runs one personal-object request against the scene.
inline EpisodeReport run_request(const Episode& ep, int target, const ReferenceSet& refs,
                                 const std::string& instruction, const PipelineConfig& pipe, int round = 0,
                                 const Removed& removed = {}) {
  const auto& cfg = ep.config;
  const auto style = pipe.style();
  EpisodeReport r;
  r.target = target;

  auto grounding = ground_scene(ep, refs, pipe, round, removed);
  r.initial_selection = winner_identities(ep, grounding, removed);

  const MockTracker tracker(ep, 0, round, removed);
  auto views = render_views(ep, 0, removed);
  auto states = start_tracking(grounding, views, tracker);

  for (int t = 0; t < cfg.steps; ++t) {
    if (t > 0) {
      views = render_views(ep, t, removed);
      for (std::size_t v = 0; v < states.size(); ++v) states[v] = track_step(views[v], states[v], tracker);
    }
    const auto outcome = outcome_from_tracks(states);
    std::vector<std::optional<int>> step_ids;
    std::vector<bool> has_prompt;
    for (const auto& s : states) {
      has_prompt.push_back(s.current_mask.has_value());
      step_ids.push_back(s.current_mask ? identify_mask(ep, *s.current_mask, s.view_index, t, removed)
                                        : std::nullopt);
    }
    r.trace.push_back(step_ids);

    Observation obs{views, {}, instruction};
    const auto prompted = compose_prompt(obs, outcome, style);
    if (t == cfg.steps - 1) {
      const auto d = surrogate_policy(prompted, ep, target, t, style.color_word, round, removed);
      r.acted_on = d.acted_on;
      r.highlighted = d.highlighted;
      r.success = d.success;
      r.target_moved = d.acted_on == target;
      r.failure_case = classify(r.success, cfg.views, step_ids, has_prompt, target);
    }
  }
  return r;
}

/// Grounds and prompts the first frame only and returns what the policy reads
/// from the highlight in each view.
inline std::vector<std::optional<int>> probe_prompt(const Episode& ep, const PipelineConfig& pipe) {
  const auto style = pipe.style();
  const auto grounding = ground_scene(ep, ep.references.front(), pipe);
  const Observation obs{render_views(ep, 0), {}, ep.instructions.front()};
  const auto prompted = compose_prompt(obs, grounding, style);
  return surrogate_policy(prompted, ep, ep.target(), 0, style.color_word).highlighted;
}

inline EpisodeReport run_episode(const Episode& ep, const PipelineConfig& pipe = {}) {
  return run_request(ep, ep.target(), ep.references.front(), ep.instructions.front(), pipe);
}

inline EpisodeReport run_episode(const SceneConfig& cfg, const PipelineConfig& pipe = {}) {
  return run_episode(gen_episode(cfg), pipe);
}

struct Subgoal {
  ReferenceSet refs;
  std::string instruction;
};

/// One sub-goal per target, "put my <category> into the plastic bowl".
inline std::vector<Subgoal> default_subgoals(const Episode& ep) {
  std::vector<Subgoal> out;
  for (std::size_t j = 0; j < ep.references.size(); ++j)
    out.push_back({ep.references[j], "put my " + ep.objects[ep.targets[j]].category + " into the plastic bowl"});
  return out;
}

struct SequentialReport {
  std::vector<EpisodeReport> steps;
  bool all_success = false;  // every sub-goal succeeded
  bool wrong_object = false; // some sub-goal acted on a distractor or found its target gone
  bool others = false;       // remaining failures

  friend bool operator==(const SequentialReport&, const SequentialReport&) = default;
};

/// Executes sub-goals in order with one highlighted target at a time. After
/// each sub-goal the object the policy moved leaves the scene and grounding
/// starts from scratch for the next one.
inline SequentialReport run_sequential(const Episode& ep, const std::vector<Subgoal>& subgoals,
                                       const PipelineConfig& pipe = {}) {
  if (subgoals.size() < 2) throw ConfigError("sequential execution needs at least two sub-goals");
  SequentialReport out;
  Removed removed(ep.objects.size(), false);
  for (std::size_t g = 0; g < subgoals.size(); ++g) {
    const int target = ep.find(subgoals[g].refs.object_id());
    if (target < 0) throw ConfigError("sub-goal object \"" + subgoals[g].refs.object_id() + "\" is not in the scene");
    EpisodeReport r;
    r.target = target;
    if (removed[target]) {
      r.precondition_failed = true;
      r.failure_case = ep.config.views == 1 ? FailureCase::case1 : FailureCase::case2;
      out.steps.push_back(r);
      continue;
    }
    r = run_request(ep, target, subgoals[g].refs, subgoals[g].instruction, pipe, static_cast<int>(g) + 1, removed);
    // The moved object is gone for the next sub-goal.
    if (r.acted_on) {
      Rng ctrl(ep.config.seed, Stream::policy, {static_cast<std::uint64_t>(g) + 1, 3});
      if (!ctrl.bernoulli(ep.config.p_ctrl)) removed[*r.acted_on] = true;
    }
    out.steps.push_back(r);
  }
  out.all_success = std::all_of(out.steps.begin(), out.steps.end(), [](const auto& s) { return s.success; });
  out.wrong_object = std::any_of(out.steps.begin(), out.steps.end(), [](const auto& s) {
    return s.precondition_failed || (s.acted_on && *s.acted_on != s.target);
  });
  out.others = !out.all_success && !out.wrong_object;
  return out;
}

}  // namespace vap::sim

#pragma once

// Tracking-aware grounding: parse the personal category from the
// instruction, detect same-category candidates in every view, pick the user's
// instance by reference voting, refine it to a mask, then let a tracker carry
// the mask forward. Views are grounded independently; a view without
// candidates (or whose tracker loses the object) falls back to no prompt.

#include <array>
#include <cctype>
#include <cstddef>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vap/crossview.hpp"
#include "vap/error.hpp"
#include "vap/matcher.hpp"
#include "vap/scene.hpp"

namespace vap {

/// Open-vocabulary detector returning same-category candidates for one view.
class DetectorPort {
 public:
  virtual ~DetectorPort() = default;
  virtual std::vector<Proposal> detect(std::string_view category, const RasterImage& image, int view) const = 0;
};

/// Class-agnostic box-to-mask refinement.
class SegmenterPort {
 public:
  virtual ~SegmenterPort() = default;
  virtual Mask segment(const RasterImage& image, const BoundingBox& box, int view) const = 0;
};

/// Mask propagation across frames. `track` returns a state without a mask
/// when the object is lost.
class TrackerPort {
 public:
  virtual ~TrackerPort() = default;
  virtual ViewTrackState initialize(const RasterImage& image, const Mask& mask, int view) const = 0;
  virtual ViewTrackState track(const RasterImage& image, const ViewTrackState& state) const = 0;
};

struct CategoryQuery {
  std::string category;
  std::size_t span_begin = 0;  // offset of "my"
  std::size_t span_end = 0;    // one past the last category character

  friend bool operator==(const CategoryQuery&, const CategoryQuery&) = default;
};

/// Words that terminate the noun span after "my".
inline constexpr std::array<std::string_view, 9> kCategoryStopWords = {"into", "onto", "near", "to", "in",
                                                                       "on",   "at",   "and",  "then"};

namespace detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_stop_word(std::string_view token) {
  const auto lower = lowercase(token);
  for (auto w : kCategoryStopWords)
    if (lower == w) return true;
  return false;
}

inline bool is_trailing_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':'; }

struct Token {
  std::size_t begin;
  std::size_t end;
};

inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    out.push_back({b, i});
  }
  return out;
}

}  // namespace detail

/// Finds the first "my <category>" trigger. The category runs greedily over
/// the following tokens until a stop word, a clause-ending punctuation mark
/// or the end of the instruction.
inline CategoryQuery parse_category(std::string_view instruction) {
  const auto tokens = detail::tokenize(instruction);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto word = instruction.substr(tokens[t].begin, tokens[t].end - tokens[t].begin);
    if (detail::lowercase(word) != "my") continue;
    std::size_t end = 0;
    for (std::size_t k = t + 1; k < tokens.size(); ++k) {
      auto tok = instruction.substr(tokens[k].begin, tokens[k].end - tokens[k].begin);
      if (detail::is_stop_word(tok)) break;
      std::size_t tok_end = tokens[k].end;
      while (tok_end > tokens[k].begin && detail::is_trailing_punct(instruction[tok_end - 1])) --tok_end;
      if (tok_end > tokens[k].begin) end = tok_end;
      if (tok_end != tokens[k].end) break;
    }
    if (end == 0) continue;
    const std::size_t cat_begin = tokens[t + 1].begin;
    return CategoryQuery{std::string(instruction.substr(cat_begin, end - cat_begin)), tokens[t].begin, end};
  }
  throw NoTrigger(std::string(instruction));
}

/// Grounding result for one camera.
struct ViewGrounding {
  int view_index = 0;
  std::optional<Mask> mask;
  std::optional<Proposal> winner;
  bool fallback = true;
  std::vector<Proposal> proposals;           // detector output, kept for cross-view fusion
  std::optional<SelectionResult> selection;  // absent when nothing was detected
};

struct GroundingOutcome {
  std::vector<ViewGrounding> per_view;
};

namespace detail {

inline std::optional<Mask> refine(const SegmenterPort& segmenter, const RasterImage& image, const Proposal& winner,
                                  int view) {
  try {
    auto mask = segmenter.segment(image, winner.box(), view);
    if (mask.width() != image.width() || mask.height() != image.height() || mask.empty()) return std::nullopt;
    return mask;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Grounds a single view. Port failures become a fallback for this view.
inline ViewGrounding ground_view(const RasterImage& image, int view, const ReferenceSet& refs,
                                 const DetectorPort& detector, const SegmenterPort& segmenter,
                                 Selector selector = Selector::vote) {
  ViewGrounding g;
  g.view_index = view;
  try {
    g.proposals = detector.detect(refs.category(), image, view);
  } catch (const std::exception&) {
    g.proposals.clear();
  }
  if (g.proposals.empty()) return g;
  g.selection = select(selector, g.proposals, refs);
  g.winner = g.proposals[g.selection->winner_index];
  g.mask = detail::refine(segmenter, image, *g.winner, view);
  g.fallback = !g.mask.has_value();
  return g;
}

/// Initial grounding at t = 0, independently per view.
inline GroundingOutcome ground_initial(std::span<const RasterImage> views, const ReferenceSet& refs,
                                       const DetectorPort& detector, const SegmenterPort& segmenter,
                                       Selector selector = Selector::vote) {
  if (views.empty()) throw InvalidAssignment("grounding needs at least one view");
  GroundingOutcome out;
  for (std::size_t v = 0; v < views.size(); ++v)
    out.per_view.push_back(ground_view(views[v], static_cast<int>(v), refs, detector, segmenter, selector));
  return out;
}

struct FusionParams {
  double lambda = 1.0;
  double beta = 0.5;
  double null_unary = 0.0;
  double threshold = 0.6;
  std::optional<GeometryTerm> geometry;
};

inline AssociationInstance association_from(const GroundingOutcome& g, const ReferenceSet& refs,
                                            const FusionParams& params) {
  AssociationInstance inst;
  for (const auto& v : g.per_view) inst.per_view.push_back(v.proposals);
  inst.references = refs.references();
  inst.lambda = params.lambda;
  inst.beta = params.beta;
  inst.null_unary = params.null_unary;
  inst.geometry = params.geometry;
  return inst;
}

/// Replaces the independent per-view winners with a jointly associated
/// assignment. Views assigned "none" fall back. With fewer than two views,
/// or Fusion::independent, the outcome is returned unchanged.
inline GroundingOutcome fuse_views(GroundingOutcome g, std::span<const RasterImage> views, const ReferenceSet& refs,
                                   const SegmenterPort& segmenter, Fusion method, const FusionParams& params = {}) {
  if (method == Fusion::independent || g.per_view.size() < 2) return g;
  const auto inst = association_from(g, refs, params);
  Assignment m;
  switch (method) {
    case Fusion::exact: {
      try {
        m = solve_exact(inst);
      } catch (const ProblemTooLarge&) {
        m = solve_cluster(inst, params.threshold);
      }
      break;
    }
    case Fusion::cluster: m = solve_cluster(inst, params.threshold); break;
    case Fusion::pairwise: m = solve_pairwise(inst); break;
    case Fusion::independent: break;
  }
  for (std::size_t v = 0; v < g.per_view.size(); ++v) {
    auto& view = g.per_view[v];
    if (!m.choices[v]) {
      view.winner.reset();
      view.mask.reset();
      view.fallback = true;
      continue;
    }
    const auto& chosen = view.proposals[*m.choices[v]];
    if (view.winner && *view.winner == chosen && view.mask) continue;
    view.winner = chosen;
    view.mask = detail::refine(segmenter, views[v], chosen, view.view_index);
    view.fallback = !view.mask.has_value();
  }
  return g;
}

/// Tracker initialization from the grounding masks; fallback views start
/// (and stay) without a mask.
inline std::vector<ViewTrackState> start_tracking(const GroundingOutcome& g, std::span<const RasterImage> views,
                                                  const TrackerPort& tracker) {
  std::vector<ViewTrackState> states;
  for (const auto& view : g.per_view) {
    ViewTrackState s;
    s.view_index = view.view_index;
    if (view.mask) {
      try {
        s = tracker.initialize(views[static_cast<std::size_t>(view.view_index)], *view.mask, view.view_index);
      } catch (const std::exception&) {
        s = ViewTrackState{view.view_index, std::nullopt, {}};
      }
    }
    states.push_back(std::move(s));
  }
  return states;
}

/// One tracking update. Detection and retrieval are never re-run here: a view
/// without a mask stays in fallback for the rest of the episode.
inline ViewTrackState track_step(const RasterImage& view, const ViewTrackState& state, const TrackerPort& tracker) {
  if (!state.current_mask) return state;
  try {
    auto next = tracker.track(view, state);
    next.view_index = state.view_index;
    if (next.current_mask &&
        (next.current_mask->width() != view.width() || next.current_mask->height() != view.height()))
      next.current_mask.reset();
    return next;
  } catch (const std::exception&) {
    return ViewTrackState{state.view_index, std::nullopt, state.memory};
  }
}

/// Grounding outcome for a later step, rebuilt from the tracker states.
inline GroundingOutcome outcome_from_tracks(std::span<const ViewTrackState> states) {
  GroundingOutcome g;
  for (const auto& s : states) {
    ViewGrounding v;
    v.view_index = s.view_index;
    v.mask = s.current_mask;
    v.fallback = !s.current_mask.has_value();
    g.per_view.push_back(std::move(v));
  }
  return g;
}

}  // namespace vap

#pragma once

// Perception stand-ins driven by episode ground truth. Randomness is keyed by
// (view, step, grounding round), so calls can happen in any order.

#include <algorithm>
#include <any>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "vap/grounder.hpp"
#include "vap/sim/episode.hpp"
#include "vap/sim/random.hpp"

namespace vap::sim {

namespace detail {
inline std::uint64_t u64(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }
}  // namespace detail

/// Returns every present same-category object as a proposal, in a shuffled
/// order. Targets are dropped with probability p_miss.
class MockDetector final : public DetectorPort {
 public:
  MockDetector(const Episode& ep, int t, int round, Removed removed = {})
      : ep_(&ep), t_(t), round_(round), removed_(std::move(removed)) {}

  std::vector<Proposal> detect(std::string_view category, const RasterImage&, int view) const override {
    using detail::u64;
    const auto& cfg = ep_->config;
    std::vector<int> order;
    for (const auto& o : ep_->objects) {
      if (o.category != category || !present(*ep_, o.index, view, removed_)) continue;
      Rng miss(cfg.seed, Stream::detector, {u64(round_), u64(t_), u64(view), 0, u64(o.index)});
      if (o.is_target() && miss.bernoulli(cfg.p_miss)) continue;
      order.push_back(o.index);
    }
    Rng shuffler(cfg.seed, Stream::detector, {u64(round_), u64(t_), u64(view), 1});
    shuffler.shuffle(order);

    std::vector<Proposal> out;
    for (int idx : order) {
      Rng conf(cfg.seed, Stream::detector, {u64(round_), u64(t_), u64(view), 2, u64(idx)});
      const double c = std::clamp(1.0 - cfg.sigma * conf.uniform(), 0.0, 1.0);
      out.emplace_back(object_box(*ep_, idx, view, t_), c, ep_->objects[idx].observed[view]);
    }
    return out;
  }

 private:
  const Episode* ep_;
  int t_;
  int round_;
  Removed removed_;
};

/// Returns the ground-truth mask of the object owning the box, or the filled
/// box when no object matches it exactly.
class MockSegmenter final : public SegmenterPort {
 public:
  MockSegmenter(const Episode& ep, int t, Removed removed = {}) : ep_(&ep), t_(t), removed_(std::move(removed)) {}

  Mask segment(const RasterImage& image, const BoundingBox& box, int view) const override {
    if (auto obj = identify_box(*ep_, box, view, t_, removed_)) return object_mask(*ep_, *obj, view, t_);
    return Mask::filled(image.width(), image.height(), box);
  }

 private:
  const Episode* ep_;
  int t_;
  Removed removed_;
};

/// Tracker memory: which object is followed and at which step.
struct TrackLock {
  std::optional<int> object;
  int step = 0;
};

/// Follows the locked object exactly; with probability p_drift per step it
/// jumps to another present instance of the same category in that view.
class MockTracker final : public TrackerPort {
 public:
  MockTracker(const Episode& ep, int start_step, int round, Removed removed = {})
      : ep_(&ep), start_(start_step), round_(round), removed_(std::move(removed)) {}

  ViewTrackState initialize(const RasterImage&, const Mask& mask, int view) const override {
    ViewTrackState s;
    s.view_index = view;
    TrackLock lock{identify_mask(*ep_, mask, view, start_, removed_), start_};
    if (lock.object) s.current_mask = mask;
    s.memory = lock;
    return s;
  }

  ViewTrackState track(const RasterImage&, const ViewTrackState& state) const override {
    using detail::u64;
    const auto* prev = std::any_cast<TrackLock>(&state.memory);
    if (!prev) throw Error("tracker state was not produced by this tracker");
    TrackLock lock = *prev;
    ++lock.step;
    const int view = state.view_index;
    if (lock.object) {
      Rng rng(ep_->config.seed, Stream::tracker, {u64(round_), u64(lock.step), u64(view)});
      if (rng.bernoulli(ep_->config.p_drift)) {
        std::vector<int> others;
        const auto& category = ep_->objects[*lock.object].category;
        for (const auto& o : ep_->objects)
          if (o.index != *lock.object && o.category == category && present(*ep_, o.index, view, removed_))
            others.push_back(o.index);
        if (!others.empty()) lock.object = others[rng.below(others.size())];
      }
    }
    ViewTrackState next;
    next.view_index = view;
    if (lock.object && present(*ep_, *lock.object, view, removed_))
      next.current_mask = object_mask(*ep_, *lock.object, view, lock.step);
    next.memory = lock;
    return next;
  }

 private:
  const Episode* ep_;
  int start_;
  int round_;
  Removed removed_;
};

}  // namespace vap::sim

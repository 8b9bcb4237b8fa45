#pragma once

// Core value types shared by the grounding, prompting, association and
// simulation layers. Everything here is immutable after construction.

#include <algorithm>
#include <any>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vap/error.hpp"

namespace vap {

/// Unit-norm feature vector. Construction always normalizes, so cosine
/// similarity between two embeddings is a plain dot product.
class Embedding {
 public:
  Embedding() = default;

  static Embedding normalize(std::span<const double> values) {
    if (values.empty()) throw InvalidEmbedding("empty embedding");
    double sq = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) throw InvalidEmbedding("non-finite embedding entry");
      sq += v * v;
    }
    if (sq == 0.0) throw InvalidEmbedding("zero vector cannot be normalized");
    const double norm = std::sqrt(sq);
    Embedding e;
    e.values_.reserve(values.size());
    for (double v : values) e.values_.push_back(v / norm);
    return e;
  }

  static Embedding normalize(std::initializer_list<double> values) {
    return normalize(std::span<const double>(values.begin(), values.size()));
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

inline Embedding normalize(std::span<const double> values) { return Embedding::normalize(values); }

/// Pixel rectangle with inclusive corners; a 1x1 box has min == max.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  BoundingBox() = default;
  BoundingBox(int x0, int y0, int x1, int y1) : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (x0 > x1 || y0 > y1) throw OutOfBounds("bounding box has min > max");
  }

  int width() const noexcept { return x_max - x_min + 1; }
  int height() const noexcept { return y_max - y_min + 1; }
  bool contains(double x, double y) const noexcept {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool fits(int image_width, int image_height) const noexcept {
    return x_min >= 0 && y_min >= 0 && x_max < image_width && y_max < image_height;
  }
  std::pair<double, double> center() const noexcept {
    return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Dense row-major binary occupancy grid.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw OutOfBounds("mask dimensions must be positive");
    bits_.assign(static_cast<std::size_t>(width) * height, 0);
  }

  static Mask filled(int width, int height, const BoundingBox& box) {
    if (!box.fits(width, height)) throw OutOfBounds("box outside mask");
    Mask m(width, height);
    for (int y = box.y_min; y <= box.y_max; ++y)
      for (int x = box.x_min; x <= box.x_max; ++x) m.set(x, y);
    return m;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits_[index(x, y)] = on ? 1 : 0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool empty() const noexcept { return count() == 0; }

  /// Number of pixels set in both masks; dimensions must match.
  std::size_t overlap(const Mask& other) const {
    if (other.width_ != width_ || other.height_ != height_)
      throw DimensionMismatch("mask dimensions differ");
    std::size_t n = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) n += bits_[i] & other.bits_[i];
    return n;
  }

  std::optional<BoundingBox> bounding_box() const {
    int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (at(x, y)) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) return std::nullopt;
    return BoundingBox(x0, y0, x1, y1);
  }

  /// Mean pixel coordinate of the set bits; nullopt for an empty mask.
  std::optional<std::pair<double, double>> centroid() const {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (at(x, y)) {
          sx += x;
          sy += y;
          ++n;
        }
    if (n == 0) return std::nullopt;
    return std::pair{sx / n, sy / n};
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) throw OutOfBounds("mask index out of range");
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// One detector candidate in one view.
class Proposal {
 public:
  Proposal(BoundingBox box, double confidence, Embedding embedding,
           std::optional<Mask> mask = std::nullopt)
      : box_(box), confidence_(confidence), embedding_(std::move(embedding)), mask_(std::move(mask)) {
    if (!(confidence_ >= 0.0 && confidence_ <= 1.0))
      throw OutOfBounds("proposal confidence outside [0,1]");
    std::optional<std::pair<double, double>> c;
    if (mask_) c = mask_->centroid();
    centroid_ = c ? *c : box_.center();
    if (!box_.contains(centroid_.first, centroid_.second))
      throw OutOfBounds("proposal mask centroid lies outside its box");
  }

  const BoundingBox& box() const noexcept { return box_; }
  double confidence() const noexcept { return confidence_; }
  const Embedding& embedding() const noexcept { return embedding_; }
  const std::optional<Mask>& mask() const noexcept { return mask_; }
  std::pair<double, double> centroid() const noexcept { return centroid_; }

  friend bool operator==(const Proposal&, const Proposal&) = default;

 private:
  BoundingBox box_;
  double confidence_;
  Embedding embedding_;
  std::optional<Mask> mask_;
  std::pair<double, double> centroid_;
};

/// The user's few-shot memory for one personal object.
class ReferenceSet {
 public:
  ReferenceSet(std::string object_id, std::string category, std::vector<Embedding> references)
      : object_id_(std::move(object_id)), category_(std::move(category)), refs_(std::move(references)) {
    if (refs_.empty()) throw InvalidEmbedding("reference set needs at least one embedding");
    for (const auto& r : refs_)
      if (r.dim() != refs_.front().dim()) throw DimensionMismatch("reference embeddings differ in dim");
  }

  const std::string& object_id() const noexcept { return object_id_; }
  const std::string& category() const noexcept { return category_; }
  const std::vector<Embedding>& references() const noexcept { return refs_; }
  std::size_t size() const noexcept { return refs_.size(); }
  std::size_t dim() const noexcept { return refs_.front().dim(); }

  friend bool operator==(const ReferenceSet&, const ReferenceSet&) = default;

 private:
  std::string object_id_;
  std::string category_;
  std::vector<Embedding> refs_;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major 8-bit RGB raster.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {0, 0, 0}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw OutOfBounds("image dimensions must be positive");
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill[0];
      pixels_[i + 1] = fill[1];
      pixels_[i + 2] = fill[2];
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  Rgb at(int x, int y) const {
    const auto i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto i = index(x, y);
    pixels_[i] = c[0];
    pixels_[i + 1] = c[1];
    pixels_[i + 2] = c[2];
  }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) throw OutOfBounds("pixel index out of range");
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Multi-view policy input. `proprio` is forwarded untouched.
struct Observation {
  std::vector<RasterImage> views;
  std::vector<std::uint8_t> proprio;
  std::string instruction;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Per-camera tracking state. `memory` belongs to whichever tracker produced it.
struct ViewTrackState {
  int view_index = 0;
  std::optional<Mask> current_mask;
  std::any memory;
};

}  // namespace vap

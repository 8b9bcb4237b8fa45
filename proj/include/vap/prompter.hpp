#pragma once

// Visual prompting: tint the grounded object and rewrite "my <category>"
// into "the <color> <category>" so the instruction names the highlight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "vap/error.hpp"
#include "vap/grounder.hpp"
#include "vap/scene.hpp"

namespace vap {

enum class PromptGeometry { mask, box };

struct PromptStyle {
  PromptGeometry geometry = PromptGeometry::mask;
  Rgb tint_rgb = {255, 0, 0};
  double alpha = 0.5;
  std::string color_word = "red";
  bool highlight = true;  // draw the tint at all
  bool rewrite = true;    // rewrite the instruction
};

/// Named tints. Returns nullopt for an unknown color word.
inline std::optional<Rgb> tint_for(std::string_view color_word) {
  if (color_word == "red") return Rgb{255, 0, 0};
  if (color_word == "green") return Rgb{0, 255, 0};
  if (color_word == "blue") return Rgb{0, 0, 255};
  return std::nullopt;
}

inline PromptStyle make_style(std::string_view color_word, double alpha = 0.5,
                              PromptGeometry geometry = PromptGeometry::mask) {
  auto tint = tint_for(color_word);
  if (!tint) throw ConfigError("unknown tint color \"" + std::string(color_word) + "\"");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("overlay alpha outside [0,1]");
  PromptStyle s;
  s.geometry = geometry;
  s.tint_rgb = *tint;
  s.alpha = alpha;
  s.color_word = std::string(color_word);
  return s;
}

/// One channel of the overlay: round-half-up of (1 - a) * src + a * tint.
inline std::uint8_t blend_channel(std::uint8_t src, std::uint8_t tint, double alpha) {
  const double v = (1.0 - alpha) * src + alpha * tint;
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

inline Rgb blend_pixel(Rgb src, Rgb tint, double alpha) {
  return {blend_channel(src[0], tint[0], alpha), blend_channel(src[1], tint[1], alpha),
          blend_channel(src[2], tint[2], alpha)};
}

inline RasterImage blend_overlay(const RasterImage& image, const Mask& mask, const PromptStyle& style) {
  if (mask.width() != image.width() || mask.height() != image.height())
    throw DimensionMismatch("overlay mask does not match image size");
  RasterImage out = image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (mask.at(x, y)) out.set(x, y, blend_pixel(image.at(x, y), style.tint_rgb, style.alpha));
  return out;
}

/// Filled-box tint, the coarser geometry used as an ablation baseline.
inline RasterImage box_overlay(const RasterImage& image, const BoundingBox& box, const PromptStyle& style) {
  if (!box.fits(image.width(), image.height())) throw OutOfBounds("overlay box outside image");
  RasterImage out = image;
  for (int y = box.y_min; y <= box.y_max; ++y)
    for (int x = box.x_min; x <= box.x_max; ++x) out.set(x, y, blend_pixel(image.at(x, y), style.tint_rgb, style.alpha));
  return out;
}

/// Replaces the trigger span "my c" with "the <color> c"; everything else is
/// kept byte for byte.
inline std::string rewrite_instruction(std::string_view instruction, const CategoryQuery& query,
                                       const PromptStyle& style) {
  if (query.span_end > instruction.size() || query.span_begin + 2 > query.span_end)
    throw InvalidAssignment("trigger span outside instruction");
  const auto span = instruction.substr(query.span_begin, query.span_end - query.span_begin);
  const bool starts_my = detail::lowercase(span.substr(0, 2)) == "my";
  const bool ends_cat = span.size() >= query.category.size() &&
                        span.substr(span.size() - query.category.size()) == query.category;
  if (!starts_my || !ends_cat) throw InvalidAssignment("trigger span does not match \"my " + query.category + "\"");
  std::string out(instruction.substr(0, query.span_begin));
  out += "the ";
  out += style.color_word;
  out += ' ';
  out += query.category;
  out += instruction.substr(query.span_end);
  return out;
}

struct RewriteResult {
  std::string text;
  bool rewritten = false;  // false when the instruction had no trigger
};

/// Rewrite when a trigger is present, otherwise pass the instruction through.
inline RewriteResult rewrite_or_passthrough(std::string_view instruction, const PromptStyle& style) {
  try {
    const auto q = parse_category(instruction);
    return {rewrite_instruction(instruction, q, style), true};
  } catch (const NoTrigger&) {
    return {std::string(instruction), false};
  }
}

/// Highlights one view according to the style geometry.
inline RasterImage highlight_view(const RasterImage& image, const Mask& mask, const PromptStyle& style) {
  if (style.geometry == PromptGeometry::mask) return blend_overlay(image, mask, style);
  const auto box = mask.bounding_box();
  if (!box) return image;
  return box_overlay(image, *box, style);
}

/// Applies the prompt to every grounded view. Fallback views and the
/// proprioceptive payload pass through untouched; the instruction is rewritten
/// only when at least one view was grounded.
inline Observation compose_prompt(const Observation& obs, const GroundingOutcome& grounding,
                                  const PromptStyle& style) {
  if (grounding.per_view.size() != obs.views.size())
    throw DimensionMismatch("grounding does not cover every view");
  Observation out = obs;
  bool any = false;
  for (const auto& g : grounding.per_view) {
    if (g.fallback || !g.mask) continue;
    any = true;
    if (!style.highlight) continue;
    auto& view = out.views.at(static_cast<std::size_t>(g.view_index));
    view = highlight_view(view, *g.mask, style);
  }
  if (any && style.rewrite) out.instruction = rewrite_or_passthrough(obs.instruction, style).text;
  return out;
}

}  // namespace vap

#pragma once

// Grounding and prompting on scenes described by files: PPM views, a JSON
// list of precomputed proposals per view, and reference embeddings.
//
// {
//   "instruction": "pick up my cup",
//   "views": ["view0.ppm", "view1.ppm"],
//   "references": {"object_id": "mug", "category": "cup", "embeddings": [[...], ...]},
//   "proposals": [[{"box": [x0, y0, x1, y1], "confidence": 0.9, "embedding": [...],
//                   "mask": "optional.pgm", "category": "optional, defaults to the reference category"}], ...]
// }

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vap/error.hpp"
#include "vap/grounder.hpp"
#include "vap/io.hpp"
#include "vap/matcher.hpp"
#include "vap/prompter.hpp"
#include "vap/scene.hpp"

namespace vap::files {

using json = nlohmann::json;

struct FileProposal {
  std::string category;
  Proposal proposal;
};

struct FileScene {
  std::string instruction;
  std::vector<RasterImage> views;
  ReferenceSet references;
  std::vector<std::vector<FileProposal>> proposals;
};

/// Serves the listed proposals of the requested category.
class ListedDetector final : public DetectorPort {
 public:
  explicit ListedDetector(const std::vector<std::vector<FileProposal>>& listed) : listed_(&listed) {}

  std::vector<Proposal> detect(std::string_view category, const RasterImage&, int view) const override {
    std::vector<Proposal> out;
    if (view < 0 || static_cast<std::size_t>(view) >= listed_->size()) return out;
    for (const auto& p : (*listed_)[view])
      if (p.category == category) out.push_back(p.proposal);
    return out;
  }

 private:
  const std::vector<std::vector<FileProposal>>* listed_;
};

/// Uses a proposal's own mask when it has one, otherwise the filled box.
class BoxSegmenter final : public SegmenterPort {
 public:
  explicit BoxSegmenter(const std::vector<std::vector<FileProposal>>& listed) : listed_(&listed) {}

  Mask segment(const RasterImage& image, const BoundingBox& box, int view) const override {
    if (view >= 0 && static_cast<std::size_t>(view) < listed_->size())
      for (const auto& p : (*listed_)[view])
        if (p.proposal.box() == box && p.proposal.mask()) return *p.proposal.mask();
    return Mask::filled(image.width(), image.height(), box);
  }

 private:
  const std::vector<std::vector<FileProposal>>* listed_;
};

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

inline Embedding embedding(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a non-empty list of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigError(where + " must be a non-empty list of numbers");
    v.push_back(x.get<double>());
  }
  return Embedding::normalize(v);
}

}  // namespace detail

inline FileScene load_scene(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("scene " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path f(p);
    return f.is_relative() ? base / f : f;
  };
  try {
    detail::only_keys(j, {"instruction", "views", "references", "proposals"}, "the scene file");
    for (const char* key : {"instruction", "views", "references", "proposals"})
      if (!j.contains(key)) throw ConfigError("the scene file needs \"" + std::string(key) + "\"");

    const auto& r = j.at("references");
    detail::only_keys(r, {"object_id", "category", "embeddings"}, "\"references\"");
    std::vector<Embedding> refs;
    for (const auto& e : r.at("embeddings")) refs.push_back(detail::embedding(e, "a reference embedding"));
    FileScene scene{j.at("instruction").get<std::string>(),
                    {},
                    ReferenceSet(r.at("object_id").get<std::string>(), r.at("category").get<std::string>(),
                                 std::move(refs)),
                    {}};

    for (const auto& v : j.at("views")) scene.views.push_back(io::load_image(resolve(v.get<std::string>())));
    if (scene.views.empty()) throw ConfigError("the scene needs at least one view");
    const auto& lists = j.at("proposals");
    if (!lists.is_array() || lists.size() != scene.views.size())
      throw ConfigError("\"proposals\" must hold one list per view");
    for (std::size_t v = 0; v < lists.size(); ++v) {
      std::vector<FileProposal> out;
      for (const auto& p : lists[v]) {
        detail::only_keys(p, {"box", "confidence", "embedding", "mask", "category"}, "a proposal");
        const auto b = p.at("box").get<std::vector<int>>();
        if (b.size() != 4) throw ConfigError("a proposal box needs four integers");
        const BoundingBox box(b[0], b[1], b[2], b[3]);
        if (!box.fits(scene.views[v].width(), scene.views[v].height()))
          throw OutOfBounds("proposal box lies outside view " + std::to_string(v));
        std::optional<Mask> mask;
        if (p.contains("mask")) mask = io::load_mask(resolve(p.at("mask").get<std::string>()));
        out.push_back({p.value("category", scene.references.category()),
                       Proposal(box, p.value("confidence", 1.0), detail::embedding(p.at("embedding"), "an embedding"),
                                std::move(mask))});
      }
      scene.proposals.push_back(std::move(out));
    }
    return scene;
  } catch (const json::exception& e) {
    throw ConfigError("scene " + path.string() + ": " + e.what());
  }
}

inline GroundingOutcome ground(const FileScene& scene, Selector selector = Selector::vote) {
  const ListedDetector detector(scene.proposals);
  const BoxSegmenter segmenter(scene.proposals);
  return ground_initial(scene.views, scene.references, detector, segmenter, selector);
}

inline json grounding_to_json(const GroundingOutcome& g) {
  json views = json::array();
  for (const auto& v : g.per_view) {
    json entry = {{"view", v.view_index}, {"fallback", v.fallback}, {"proposals", v.proposals.size()}};
    if (v.selection) {
      entry["winner"] = v.selection->winner_index;
      entry["votes"] = v.selection->votes;
      entry["mean_cosines"] = v.selection->mean_cosines;
      entry["tie_broken"] = v.selection->tie_broken;
    }
    if (v.mask) entry["mask_pixels"] = v.mask->count();
    views.push_back(entry);
  }
  return {{"views", views}};
}

}  // namespace vap::files

#pragma once
// Shared domain types: boxes, images, pseudo-annotations and the pipeline
// configuration. All types are immutable value objects once constructed
// and safe to share between workers.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovpipe/rng.hpp"

namespace ovpipe {

// Axis-aligned box in normalized corner form, relative to the owning image.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool valid() const {
    return x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 &&
           y0 < y1;
  }

  double area() const { return (x1 - x0) * (y1 - y0); }

  bool operator==(const Box&) const = default;
};

inline double iou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0, b.x0);
  const double iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1);
  const double iy1 = std::min(a.y1, b.y1);
  const double iw = std::max(0.0, ix1 - ix0);
  const double ih = std::max(0.0, iy1 - iy0);
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Per-axis scale-and-translate map: x' = sx*x + tx, y' = sy*y + ty.
struct AffineMap {
  double sx = 1.0;
  double sy = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  AffineMap inverse() const {
    if (sx == 0.0 || sy == 0.0) {
      throw std::invalid_argument("AffineMap::inverse: zero scale");
    }
    return {1.0 / sx, 1.0 / sy, -tx / sx, -ty / sy};
  }

  // Composition: (other ∘ this), i.e. apply this first, then other.
  AffineMap then(const AffineMap& other) const {
    return {sx * other.sx, sy * other.sy, tx * other.sx + other.tx,
            ty * other.sy + other.ty};
  }

  bool operator==(const AffineMap&) const = default;
};

// Maps a box through an affine. The affine must keep the box inside the
// unit square with positive area; anything else is rejected.
inline Box transform_box(const Box& b, const AffineMap& m) {
  if (!b.valid()) {
    throw std::invalid_argument("transform_box: invalid input box");
  }
  if (m.sx <= 0.0 || m.sy <= 0.0) {
    throw std::invalid_argument(
        "transform_box: affine must have positive scales");
  }
  constexpr double kEps = 1e-12;
  Box out{m.sx * b.x0 + m.tx, m.sy * b.y0 + m.ty, m.sx * b.x1 + m.tx,
          m.sy * b.y1 + m.ty};
  // Tolerate float spill at the unit-square boundary, then clamp.
  if (out.x0 < -kEps || out.y0 < -kEps || out.x1 > 1.0 + kEps ||
      out.y1 > 1.0 + kEps) {
    throw std::invalid_argument("transform_box: result leaves unit square");
  }
  out.x0 = std::clamp(out.x0, 0.0, 1.0);
  out.y0 = std::clamp(out.y0, 0.0, 1.0);
  out.x1 = std::clamp(out.x1, 0.0, 1.0);
  out.y1 = std::clamp(out.y1, 0.0, 1.0);
  if (out.x0 >= out.x1 || out.y0 >= out.y1) {
    throw std::invalid_argument("transform_box: result has zero area");
  }
  return out;
}

// Decoded image plus the text it was found with. Pixels are row-major
// H x W x C floats in [0, 1]; integer formats are converted at ingest.
struct ImageRecord {
  std::string id;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;
  std::string alt_text;
  std::optional<std::string> language;

  void validate() const {
    if (id.empty()) throw std::invalid_argument("ImageRecord: empty id");
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("ImageRecord: non-positive dimensions");
    }
    if (channels != 1 && channels != 3) {
      throw std::invalid_argument("ImageRecord: channels must be 1 or 3");
    }
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
      throw std::invalid_argument("ImageRecord: pixel count mismatch");
    }
  }

  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

enum class AnnotationOrigin { curated, ngram };

inline const char* to_string(AnnotationOrigin o) {
  return o == AnnotationOrigin::curated ? "curated" : "ngram";
}

inline AnnotationOrigin origin_from_string(std::string_view s) {
  if (s == "curated") return AnnotationOrigin::curated;
  if (s == "ngram") return AnnotationOrigin::ngram;
  throw std::invalid_argument("unknown annotation origin: " + std::string(s));
}

// One scored, labeled box.
struct PseudoAnnotation {
  Box box;
  std::string label;
  double score = 0.0;
  AnnotationOrigin origin = AnnotationOrigin::ngram;

  bool operator==(const PseudoAnnotation&) const = default;
};

struct AnnotatedImage {
  std::string image_id;
  std::vector<PseudoAnnotation> annotations;
};

// Pipeline-wide knobs. Defaults reproduce the recipe this library
// implements; every CLI stage accepts the same fields as flags.
struct PipelineConfig {
  double keep_threshold = 0.1;
  double image_gate_threshold = 0.3;
  double curated_rescale_factor = 0.3;
  int max_ngram_len = 10;
  int max_num_queries = 300;
  double drop_rate = 0.5;
  double noise_max = 0.01;
  int instance_top_k = 512;
  std::vector<int> grid_sizes_selftrain = {1, 2, 3, 4, 6};
  std::vector<int> grid_sizes_finetune = {1, 2, 3};
  double tile_scale_min = 0.5;
  double tile_scale_max = 1.0;
  int template_count = 7;
  long long lr_timescale = 10000;
  std::uint64_t rng_seed = 42;
  // Composite mosaic resolution in pixels; 1008 divides evenly by every
  // default grid size.
  int composite_px = 1008;
  // N-gram enumeration order; see label_space.hpp.
  std::string ngram_order = "window";

  void validate() const {
    if (keep_threshold < 0.0 || keep_threshold > image_gate_threshold ||
        image_gate_threshold > 1.0) {
      throw std::invalid_argument(
          "config: need 0 <= keep_threshold <= image_gate_threshold <= 1");
    }
    if (curated_rescale_factor <= 0.0 || curated_rescale_factor > 1.0) {
      throw std::invalid_argument("config: curated_rescale_factor not in (0,1]");
    }
    if (drop_rate <= 0.0 || drop_rate >= 1.0) {
      throw std::invalid_argument("config: drop_rate not in (0,1)");
    }
    if (max_ngram_len < 1) {
      throw std::invalid_argument("config: max_ngram_len must be >= 1");
    }
    if (max_num_queries < 1) {
      throw std::invalid_argument("config: max_num_queries must be >= 1");
    }
    if (noise_max < 0.0) {
      throw std::invalid_argument("config: noise_max must be >= 0");
    }
    if (instance_top_k < 1) {
      throw std::invalid_argument("config: instance_top_k must be >= 1");
    }
    auto check_grids = [](const std::vector<int>& g, const char* name) {
      if (g.empty()) {
        throw std::invalid_argument(std::string("config: empty ") + name);
      }
      for (int v : g) {
        if (v <= 0) {
          throw std::invalid_argument(std::string("config: non-positive ") +
                                      name + " entry");
        }
      }
    };
    check_grids(grid_sizes_selftrain, "grid_sizes_selftrain");
    check_grids(grid_sizes_finetune, "grid_sizes_finetune");
    if (!(tile_scale_min > 0.0 && tile_scale_min <= tile_scale_max &&
          tile_scale_max <= 1.0)) {
      throw std::invalid_argument("config: tile scale range not in (0,1]");
    }
    if (template_count < 1) {
      throw std::invalid_argument("config: template_count must be >= 1");
    }
    if (lr_timescale < 1) {
      throw std::invalid_argument("config: lr_timescale must be >= 1");
    }
    if (composite_px < 1) {
      throw std::invalid_argument("config: composite_px must be >= 1");
    }
    if (ngram_order != "window" && ngram_order != "length") {
      throw std::invalid_argument("config: ngram_order must be window|length");
    }
  }
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"keep_threshold", c.keep_threshold},
                     {"image_gate_threshold", c.image_gate_threshold},
                     {"curated_rescale_factor", c.curated_rescale_factor},
                     {"max_ngram_len", c.max_ngram_len},
                     {"max_num_queries", c.max_num_queries},
                     {"drop_rate", c.drop_rate},
                     {"noise_max", c.noise_max},
                     {"instance_top_k", c.instance_top_k},
                     {"grid_sizes_selftrain", c.grid_sizes_selftrain},
                     {"grid_sizes_finetune", c.grid_sizes_finetune},
                     {"tile_scale_range",
                      std::vector<double>{c.tile_scale_min, c.tile_scale_max}},
                     {"template_count", c.template_count},
                     {"lr_timescale", c.lr_timescale},
                     {"rng_seed", c.rng_seed},
                     {"composite_px", c.composite_px},
                     {"ngram_order", c.ngram_order}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  PipelineConfig d;
  c.keep_threshold = j.value("keep_threshold", d.keep_threshold);
  c.image_gate_threshold =
      j.value("image_gate_threshold", d.image_gate_threshold);
  c.curated_rescale_factor =
      j.value("curated_rescale_factor", d.curated_rescale_factor);
  c.max_ngram_len = j.value("max_ngram_len", d.max_ngram_len);
  c.max_num_queries = j.value("max_num_queries", d.max_num_queries);
  c.drop_rate = j.value("drop_rate", d.drop_rate);
  c.noise_max = j.value("noise_max", d.noise_max);
  c.instance_top_k = j.value("instance_top_k", d.instance_top_k);
  c.grid_sizes_selftrain =
      j.value("grid_sizes_selftrain", d.grid_sizes_selftrain);
  c.grid_sizes_finetune = j.value("grid_sizes_finetune", d.grid_sizes_finetune);
  if (j.contains("tile_scale_range")) {
    auto r = j.at("tile_scale_range").get<std::vector<double>>();
    if (r.size() != 2) {
      throw std::invalid_argument("config: tile_scale_range must have 2 entries");
    }
    c.tile_scale_min = r[0];
    c.tile_scale_max = r[1];
  }
  c.template_count = j.value("template_count", d.template_count);
  c.lr_timescale = j.value("lr_timescale", d.lr_timescale);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
  c.composite_px = j.value("composite_px", d.composite_px);
  c.ngram_order = j.value("ngram_order", d.ngram_order);
}

// Canonical serialized form (keys sorted by nlohmann::json) and its hash;
// stage manifests embed both so shards are self-describing.
inline std::string config_canonical_json(const PipelineConfig& c) {
  return nlohmann::json(c).dump();
}

inline std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_canonical_json(c))));
  return std::string(buf);
}

inline void to_json(nlohmann::json& j, const Box& b) {
  j = nlohmann::json::array({b.x0, b.y0, b.x1, b.y1});
}

inline void from_json(const nlohmann::json& j, Box& b) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("box JSON must be [x0,y0,x1,y1]");
  }
  b = Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

inline void to_json(nlohmann::json& j, const PseudoAnnotation& a) {
  j = nlohmann::json{{"box", a.box},
                     {"label", a.label},
                     {"score", a.score},
                     {"origin", to_string(a.origin)}};
}

inline void from_json(const nlohmann::json& j, PseudoAnnotation& a) {
  a.box = j.at("box").get<Box>();
  a.label = j.at("label").get<std::string>();
  a.score = j.at("score").get<double>();
  a.origin = origin_from_string(j.at("origin").get<std::string>());
}

inline void to_json(nlohmann::json& j, const AnnotatedImage& a) {
  j = nlohmann::json{{"image_id", a.image_id}, {"annotations", a.annotations}};
}

inline void from_json(const nlohmann::json& j, AnnotatedImage& a) {
  a.image_id = j.at("image_id").get<std::string>();
  a.annotations = j.at("annotations").get<std::vector<PseudoAnnotation>>();
}

}  // namespace ovpipe

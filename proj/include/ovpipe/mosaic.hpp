#pragma once
// Grid mosaics: random per-tile resize-and-pad, row-major tile placement,
// and exact annotation remapping through composed affines. Assembly is a
// pure function of the plan, so plans can be built sequentially from a
// seeded stream and assembled by parallel workers in any order.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovpipe/core.hpp"
#include "ovpipe/rng.hpp"

namespace ovpipe {

struct MosaicPlan {
  std::string example_id;
  int grid = 1;                              // tiles per side
  std::vector<std::string> tile_assignments; // grid^2 image ids, row-major
  std::vector<double> tile_scales;           // per-tile width fraction
};

// Uniform draw from the configured grid set.
inline int sample_grid(const std::vector<int>& grid_sizes, Rng& rng) {
  if (grid_sizes.empty()) {
    throw std::invalid_argument("sample_grid: empty grid set");
  }
  return grid_sizes[rng.uniform_int(grid_sizes.size())];
}

// Expected raw images per example under equal-proportion grid sampling.
inline double mean_tiles_per_example(const std::vector<int>& grid_sizes) {
  if (grid_sizes.empty()) {
    throw std::invalid_argument("mean_tiles_per_example: empty grid set");
  }
  double sum = 0.0;
  for (int g : grid_sizes) sum += static_cast<double>(g) * g;
  return sum / static_cast<double>(grid_sizes.size());
}

struct ResizedTile {
  int tile_w = 0;
  int tile_h = 0;
  int content_w = 0;
  int content_h = 0;
  int channels = 0;
  std::vector<float> pixels;  // tile_h x tile_w x channels, padded with 0
  AffineMap content_affine;   // source unit square -> tile unit square
};

namespace mosaic_detail {

// Bilinear resample of a whole image to target_w x target_h.
inline std::vector<float> resize_bilinear(const ImageRecord& img, int target_w,
                                          int target_h) {
  std::vector<float> out(static_cast<std::size_t>(target_w) * target_h *
                         img.channels);
  const double x_ratio = static_cast<double>(img.width) / target_w;
  const double y_ratio = static_cast<double>(img.height) / target_h;
  for (int y = 0; y < target_h; ++y) {
    const double sy = std::clamp((y + 0.5) * y_ratio - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < target_w; ++x) {
      const double sx = std::clamp((x + 0.5) * x_ratio - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out[(static_cast<std::size_t>(y) * target_w + x) * img.channels + c] =
            static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

}  // namespace mosaic_detail

// Resizes an image into a tile_w x tile_h tile: the content width is
// scale * tile_w, aspect ratio preserved, padded with zeros on the bottom
// and right. Content that would overflow the tile vertically is shrunk to
// fit the tile height instead (still padded on the right).
inline ResizedTile resize_pad_tile(const ImageRecord& img, int tile_w,
                                   int tile_h, double scale) {
  img.validate();
  if (tile_w <= 0 || tile_h <= 0) {
    throw std::invalid_argument("resize_pad_tile: non-positive tile size");
  }
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw std::invalid_argument("resize_pad_tile: scale not in (0,1]");
  }
  int content_w = std::max(1, static_cast<int>(std::lround(scale * tile_w)));
  int content_h = std::max(
      1, static_cast<int>(std::lround(static_cast<double>(content_w) *
                                      img.height / img.width)));
  if (content_h > tile_h) {
    content_h = tile_h;
    content_w = std::max(
        1, static_cast<int>(std::lround(static_cast<double>(tile_h) *
                                        img.width / img.height)));
  }
  content_w = std::min(content_w, tile_w);

  ResizedTile tile;
  tile.tile_w = tile_w;
  tile.tile_h = tile_h;
  tile.content_w = content_w;
  tile.content_h = content_h;
  tile.channels = img.channels;
  tile.pixels.assign(static_cast<std::size_t>(tile_w) * tile_h * img.channels,
                     0.0f);
  const auto content = mosaic_detail::resize_bilinear(img, content_w, content_h);
  for (int y = 0; y < content_h; ++y) {
    std::copy_n(content.begin() + static_cast<std::size_t>(y) * content_w * img.channels,
                static_cast<std::size_t>(content_w) * img.channels,
                tile.pixels.begin() + static_cast<std::size_t>(y) * tile_w * img.channels);
  }
  tile.content_affine =
      AffineMap{static_cast<double>(content_w) / tile_w,
                static_cast<double>(content_h) / tile_h, 0.0, 0.0};
  return tile;
}

inline ResizedTile resize_pad_tile(const ImageRecord& img, int tile_px,
                                   double scale) {
  return resize_pad_tile(img, tile_px, tile_px, scale);
}

struct MosaicLayoutEntry {
  int tile_index = 0;
  std::string image_id;
  AffineMap affine;  // source unit square -> composite unit square
};

struct MosaicExample {
  std::string id;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> composite;
  std::vector<std::uint8_t> padding_mask;  // 1 = padded pixel
  std::vector<MosaicLayoutEntry> layout;
  std::vector<PseudoAnnotation> annotations;
};

// Places the plan's tiles row-major into a composite_px square composite
// and remaps every source annotation through its tile affine. When the
// grid does not divide the resolution, the last row/column absorbs the
// remainder pixels. Annotations must come pre-filtered; ids appearing in
// the plan but missing from `images` are an error.
inline MosaicExample assemble_mosaic(
    const MosaicPlan& plan,
    const std::function<const ImageRecord*(const std::string&)>& images,
    const std::map<std::string, AnnotatedImage>& annotations,
    const PipelineConfig& cfg) {
  const int g = plan.grid;
  if (g <= 0) throw std::invalid_argument("assemble_mosaic: non-positive grid");
  if (plan.tile_assignments.size() != static_cast<std::size_t>(g) * g ||
      plan.tile_scales.size() != plan.tile_assignments.size()) {
    throw std::invalid_argument(
        "assemble_mosaic: plan needs grid^2 assignments and scales");
  }
  const int res = cfg.composite_px;
  if (res < g) {
    throw std::invalid_argument("assemble_mosaic: composite smaller than grid");
  }
  const int base = res / g;

  MosaicExample out;
  out.id = plan.example_id;
  out.width = res;
  out.height = res;
  out.padding_mask.assign(static_cast<std::size_t>(res) * res, 1);

  for (int tile_index = 0; tile_index < g * g; ++tile_index) {
    const int row = tile_index / g;
    const int col = tile_index % g;
    const int x0 = col * base;
    const int y0 = row * base;
    const int tile_w = (col == g - 1) ? res - x0 : base;
    const int tile_h = (row == g - 1) ? res - y0 : base;

    const std::string& id = plan.tile_assignments[tile_index];
    const ImageRecord* img = images(id);
    if (!img) {
      throw std::runtime_error("assemble_mosaic: missing image '" + id + "'");
    }
    if (out.channels == 0) {
      out.channels = img->channels;
      out.composite.assign(
          static_cast<std::size_t>(res) * res * out.channels, 0.0f);
    } else if (img->channels != out.channels) {
      throw std::runtime_error("assemble_mosaic: mixed channel counts in '" +
                               id + "'");
    }

    const ResizedTile tile =
        resize_pad_tile(*img, tile_w, tile_h, plan.tile_scales[tile_index]);
    for (int y = 0; y < tile.content_h; ++y) {
      for (int x = 0; x < tile.content_w; ++x) {
        out.padding_mask[static_cast<std::size_t>(y0 + y) * res + (x0 + x)] = 0;
        for (int c = 0; c < out.channels; ++c) {
          out.composite[((static_cast<std::size_t>(y0 + y) * res) + (x0 + x)) *
                            out.channels + c] =
              tile.pixels[(static_cast<std::size_t>(y) * tile.tile_w + x) *
                              out.channels + c];
        }
      }
    }

    const AffineMap tile_to_composite{
        static_cast<double>(tile_w) / res, static_cast<double>(tile_h) / res,
        static_cast<double>(x0) / res, static_cast<double>(y0) / res};
    const AffineMap full = tile.content_affine.then(tile_to_composite);
    out.layout.push_back(MosaicLayoutEntry{tile_index, id, full});

    auto it = annotations.find(id);
    if (it != annotations.end()) {
      for (const auto& a : it->second.annotations) {
        PseudoAnnotation remapped = a;
        remapped.box = transform_box(a.box, full);
        out.annotations.push_back(std::move(remapped));
      }
    }
  }
  return out;
}

// Deterministic plan stream: walks the retained ids in order, drawing a
// grid size and per-tile scales for each example until fewer than grid^2
// ids remain. The trailing remainder is dropped.
inline std::vector<MosaicPlan> make_plans(const std::vector<std::string>& ids,
                                          const std::vector<int>& grid_sizes,
                                          const PipelineConfig& cfg,
                                          std::uint64_t seed) {
  std::vector<MosaicPlan> plans;
  std::size_t next = 0;
  std::size_t plan_index = 0;
  while (next < ids.size()) {
    Rng rng(derive_seed(seed, "mosaic-plan:" + std::to_string(plan_index)));
    const int g = sample_grid(grid_sizes, rng);
    const std::size_t tiles = static_cast<std::size_t>(g) * g;
    if (ids.size() - next < tiles) break;
    MosaicPlan plan;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mosaic-%08zu", plan_index);
    plan.example_id = buf;
    plan.grid = g;
    for (std::size_t t = 0; t < tiles; ++t) {
      plan.tile_assignments.push_back(ids[next + t]);
      plan.tile_scales.push_back(rng.uniform(cfg.tile_scale_min, cfg.tile_scale_max));
    }
    next += tiles;
    ++plan_index;
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace ovpipe

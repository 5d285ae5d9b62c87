#pragma once
// Patch-variance token dropping and objectness top-k instance selection,
// as pure procedures over patch grids and score arrays. No patches are
// dropped and all instances are used at inference time; callers gate on
// TrainingMode.

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ovpipe/rng.hpp"

namespace ovpipe {

enum class TrainingMode { train, inference };

// Per-patch pixel variances of an image, channels pooled.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  int patch_px = 0;
  std::vector<double> variances;  // row-major rows x cols

  double at(int r, int c) const { return variances[static_cast<std::size_t>(r) * cols + c]; }
};

// Computes per-patch variance after adding i.i.d. uniform noise in
// [0, noise_max] to every pixel. Images whose dimensions are not a
// multiple of patch_px are padded to the next multiple with zeros; the
// noise covers padded pixels too, so padding competes like any other
// constant region. Variance is the population variance over all pixel
// values in the patch, pooled across channels.
inline PatchGrid patch_variances(std::span<const float> pixels, int width,
                                 int height, int channels, int patch_px,
                                 double noise_max, Rng& rng) {
  if (width <= 0 || height <= 0 || channels <= 0 || patch_px <= 0) {
    throw std::invalid_argument("patch_variances: bad dimensions");
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("patch_variances: pixel count mismatch");
  }
  PatchGrid grid;
  grid.patch_px = patch_px;
  grid.cols = (width + patch_px - 1) / patch_px;
  grid.rows = (height + patch_px - 1) / patch_px;
  const int padded_w = grid.cols * patch_px;
  const int padded_h = grid.rows * patch_px;

  // Noisy padded copy, filled in row-major pixel order so the noise
  // stream is independent of patch traversal.
  std::vector<double> noisy(static_cast<std::size_t>(padded_w) * padded_h *
                            channels);
  for (int y = 0; y < padded_h; ++y) {
    for (int x = 0; x < padded_w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double v = 0.0;
        if (y < height && x < width) {
          v = pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
        }
        if (noise_max > 0.0) v += rng.uniform(0.0, noise_max);
        noisy[(static_cast<std::size_t>(y) * padded_w + x) * channels + c] = v;
      }
    }
  }

  grid.variances.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
  const std::size_t per_patch =
      static_cast<std::size_t>(patch_px) * patch_px * channels;
  for (int pr = 0; pr < grid.rows; ++pr) {
    for (int pc = 0; pc < grid.cols; ++pc) {
      double sum = 0.0, sum_sq = 0.0;
      for (int dy = 0; dy < patch_px; ++dy) {
        const int y = pr * patch_px + dy;
        for (int dx = 0; dx < patch_px; ++dx) {
          const int x = pc * patch_px + dx;
          for (int c = 0; c < channels; ++c) {
            const double v =
                noisy[(static_cast<std::size_t>(y) * padded_w + x) * channels + c];
            sum += v;
            sum_sq += v * v;
          }
        }
      }
      const double mean = sum / static_cast<double>(per_patch);
      const double var =
          std::max(0.0, sum_sq / static_cast<double>(per_patch) - mean * mean);
      grid.variances[static_cast<std::size_t>(pr) * grid.cols + pc] = var;
    }
  }
  return grid;
}

struct DropMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> keep;  // row-major; 1 = token kept
  int kept_count = 0;
};

// Keeps the ceil(N * (1 - drop_rate)) highest-variance patches. Ties are
// broken by keeping the lower flat index first.
inline DropMask drop_mask(const PatchGrid& grid, double drop_rate) {
  if (drop_rate < 0.0 || drop_rate >= 1.0) {
    throw std::invalid_argument("drop_mask: drop_rate not in [0,1)");
  }
  const std::size_t n = grid.variances.size();
  DropMask mask;
  mask.rows = grid.rows;
  mask.cols = grid.cols;
  mask.keep.assign(n, 0);
  const auto kept =
      static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - drop_rate)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (grid.variances[a] != grid.variances[b]) {
      return grid.variances[a] > grid.variances[b];
    }
    return a < b;
  });
  for (std::size_t i = 0; i < kept && i < n; ++i) mask.keep[order[i]] = 1;
  mask.kept_count = static_cast<int>(std::min(kept, n));
  return mask;
}

// Mode-aware variant: at inference no patches are dropped.
inline DropMask drop_mask(const PatchGrid& grid, double drop_rate,
                          TrainingMode mode) {
  return mode == TrainingMode::train ? drop_mask(grid, drop_rate)
                                     : drop_mask(grid, 0.0);
}

struct InstanceSelection {
  std::vector<int> selected_indices;       // descending objectness
  std::vector<double> objectness_targets;  // class scores of the selected
};

// Top-k tokens by objectness; the supervision target for each selected
// token's objectness head is its actual classification score. Ties go to
// the lower index. Unselected tokens receive no target.
inline InstanceSelection select_instances(std::span<const double> objectness,
                                          std::span<const double> class_scores,
                                          int k) {
  if (objectness.size() != class_scores.size()) {
    throw std::invalid_argument("select_instances: misaligned score arrays");
  }
  if (k < 0 || static_cast<std::size_t>(k) > objectness.size()) {
    throw std::invalid_argument("select_instances: k exceeds token count");
  }
  std::vector<int> order(objectness.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (objectness[a] != objectness[b]) return objectness[a] > objectness[b];
    return a < b;
  });
  InstanceSelection sel;
  sel.selected_indices.assign(order.begin(), order.begin() + k);
  sel.objectness_targets.reserve(k);
  for (int idx : sel.selected_indices) {
    sel.objectness_targets.push_back(class_scores[idx]);
  }
  return sel;
}

// Mode-aware variant: at inference all instances are used.
inline InstanceSelection select_instances(std::span<const double> objectness,
                                          std::span<const double> class_scores,
                                          int k, TrainingMode mode) {
  return select_instances(objectness, class_scores,
                          mode == TrainingMode::train
                              ? k
                              : static_cast<int>(objectness.size()));
}

}  // namespace ovpipe

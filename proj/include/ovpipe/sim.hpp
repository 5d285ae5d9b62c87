#pragma once
// Synthetic-scene world: colored shapes on a plain background with known
// ground truth and templated captions, used to exercise the full
// annotate -> filter -> mosaic -> evaluate loop at desk scale. Captions
// are generated so that every ground-truth label is recoverable as a
// caption N-gram.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "ovpipe/annotate.hpp"
#include "ovpipe/core.hpp"
#include "ovpipe/eval.hpp"
#include "ovpipe/label_space.hpp"
#include "ovpipe/rng.hpp"

namespace ovpipe {

struct SceneVocab {
  std::vector<std::pair<std::string, std::array<float, 3>>> colors;
  std::vector<std::string> shapes;

  static SceneVocab default_vocab() {
    SceneVocab v;
    v.colors = {{"red", {0.85f, 0.10f, 0.10f}},
                {"green", {0.10f, 0.70f, 0.15f}},
                {"blue", {0.15f, 0.20f, 0.85f}},
                {"yellow", {0.90f, 0.85f, 0.10f}},
                {"purple", {0.55f, 0.15f, 0.70f}}};
    v.shapes = {"circle", "square", "triangle"};
    return v;
  }
};

struct SyntheticScene {
  ImageRecord image;  // caption stored in alt_text
  std::vector<std::pair<std::string, Box>> gt;  // (label, box)
};

namespace sim_detail {

struct LitExtent {
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
  void cover(int x, int y) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
  bool empty() const { return max_x < 0; }
};

// Rasterizes one shape into the image and reports the lit-pixel extent.
// Pixel (px, py) is lit when its center lies inside the shape.
inline LitExtent draw_shape(ImageRecord& img, const std::string& shape,
                            const std::array<float, 3>& rgb, const Box& b) {
  LitExtent lit;
  const int W = img.width, H = img.height;
  const int px0 = std::max(0, static_cast<int>(std::floor(b.x0 * W)));
  const int px1 = std::min(W - 1, static_cast<int>(std::ceil(b.x1 * W)));
  const int py0 = std::max(0, static_cast<int>(std::floor(b.y0 * H)));
  const int py1 = std::min(H - 1, static_cast<int>(std::ceil(b.y1 * H)));
  const double cx0 = b.x0, cx1 = b.x1, cy0 = b.y0, cy1 = b.y1;
  const double ox = (cx0 + cx1) / 2.0, oy = (cy0 + cy1) / 2.0;
  const double rx = (cx1 - cx0) / 2.0, ry = (cy1 - cy0) / 2.0;
  for (int py = py0; py <= py1; ++py) {
    const double cy = (py + 0.5) / H;
    for (int px = px0; px <= px1; ++px) {
      const double cx = (px + 0.5) / W;
      bool inside = false;
      if (cx >= cx0 && cx <= cx1 && cy >= cy0 && cy <= cy1) {
        if (shape == "square") {
          inside = true;
        } else if (shape == "circle") {
          const double dx = (cx - ox) / rx, dy = (cy - oy) / ry;
          inside = dx * dx + dy * dy <= 1.0;
        } else {  // triangle: vertical left edge, horizontal bottom edge
          inside = (cy - cy0) * (cx1 - cx0) >= (cx - cx0) * (cy1 - cy0);
        }
      }
      if (inside) {
        lit.cover(px, py);
        for (int c = 0; c < img.channels; ++c) {
          img.pixels[(static_cast<std::size_t>(py) * W + px) * img.channels + c] =
              rgb[static_cast<std::size_t>(c)];
        }
      }
    }
  }
  return lit;
}

}  // namespace sim_detail

// One scene: 1..6 disjoint colored shapes on a light background. Ground
// truth boxes are the exact lit-pixel bounding boxes; the caption lists
// every object as "a <color> <shape>", joined with "and".
inline SyntheticScene generate_scene(const std::string& id, int scene_px,
                                     const SceneVocab& vocab, Rng& rng) {
  SyntheticScene scene;
  scene.image.id = id;
  scene.image.width = scene_px;
  scene.image.height = scene_px;
  scene.image.channels = 3;
  scene.image.pixels.assign(static_cast<std::size_t>(scene_px) * scene_px * 3,
                            0.95f);

  const int target = 1 + static_cast<int>(rng.uniform_int(6));
  std::vector<Box> placed;
  std::string caption;
  for (int i = 0; i < target; ++i) {
    Box nominal;
    bool found = false;
    for (int attempt = 0; attempt < 40 && !found; ++attempt) {
      const double w = rng.uniform(0.12, 0.30);
      const double h = rng.uniform(0.12, 0.30);
      const double x0 = rng.uniform(0.0, 1.0 - w);
      const double y0 = rng.uniform(0.0, 1.0 - h);
      nominal = Box{x0, y0, x0 + w, y0 + h};
      found = true;
      const double margin = 2.0 / scene_px;
      for (const auto& other : placed) {
        const Box grown{std::max(0.0, other.x0 - margin),
                        std::max(0.0, other.y0 - margin),
                        std::min(1.0, other.x1 + margin),
                        std::min(1.0, other.y1 + margin)};
        if (iou(nominal, grown) > 0.0) {
          found = false;
          break;
        }
      }
    }
    if (!found) break;
    const auto& color = vocab.colors[rng.uniform_int(vocab.colors.size())];
    const auto& shape = vocab.shapes[rng.uniform_int(vocab.shapes.size())];
    const auto lit =
        sim_detail::draw_shape(scene.image, shape, color.second, nominal);
    if (lit.empty()) continue;
    placed.push_back(nominal);
    const Box gt_box{static_cast<double>(lit.min_x) / scene_px,
                     static_cast<double>(lit.min_y) / scene_px,
                     static_cast<double>(lit.max_x + 1) / scene_px,
                     static_cast<double>(lit.max_y + 1) / scene_px};
    const std::string label = color.first + " " + shape;
    scene.gt.emplace_back(label, gt_box);
    if (!caption.empty()) caption += " and ";
    caption += "a " + label;
  }
  scene.image.alt_text = caption;
  return scene;
}

inline std::vector<SyntheticScene> generate_scenes(std::size_t n,
                                                   const SceneVocab& vocab,
                                                   int scene_px,
                                                   std::uint64_t seed) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene-%06zu", i);
    Rng rng(derive_seed(seed, std::string("scene:") + buf));
    scenes.push_back(generate_scene(buf, scene_px, vocab, rng));
  }
  return scenes;
}

// Annotator for a single scene, driven by its ground truth.
inline MockAnnotator mock_annotator(const SyntheticScene& scene,
                                    const MockNoise& noise,
                                    const TemplateSet& templates,
                                    std::uint64_t seed) {
  MockAnnotator annotator(templates, noise, seed);
  std::vector<MockAnnotator::GtItem> items;
  for (const auto& [label, box] : scene.gt) items.push_back({label, box});
  annotator.add_ground_truth(scene.image.id, std::move(items));
  return annotator;
}

// Builds an evaluation task from scene ground truth and pipeline output.
inline EvalTask build_eval_task(const std::vector<SyntheticScene>& scenes,
                                const std::vector<AnnotatedImage>& annotated) {
  EvalTask task;
  for (const auto& s : scenes) {
    for (const auto& [label, box] : s.gt) {
      task.ground_truth.push_back(GtBox{s.image.id, label, box});
    }
  }
  for (const auto& a : annotated) {
    for (const auto& ann : a.annotations) {
      task.predictions.push_back(
          Prediction{a.image_id, ann.label, ann.box, ann.score});
    }
  }
  return task;
}

struct SweepRow {
  double gate = 0.0;
  std::size_t images_retained = 0;
  std::size_t annotations_kept = 0;
  double precision = 0.0;
  double recall = 0.0;
};

// Annotates every scene once, then filters at each gate and measures the
// kept annotations against ground truth (greedy match at IoU 0.5, label
// must be exact). The per-annotation keep threshold is capped at the gate
// so low gates behave like single-threshold filtering.
inline std::vector<SweepRow> run_threshold_sweep(
    const std::vector<SyntheticScene>& scenes, const std::vector<double>& gates,
    const MockNoise& noise, const PipelineConfig& cfg,
    const TemplateSet& templates) {
  MockAnnotator annotator(templates, noise, cfg.rng_seed);
  for (const auto& s : scenes) {
    std::vector<MockAnnotator::GtItem> items;
    for (const auto& [label, box] : s.gt) items.push_back({label, box});
    annotator.add_ground_truth(s.image.id, std::move(items));
  }

  std::vector<AnnotatedImage> raw;
  raw.reserve(scenes.size());
  std::size_t total_gt = 0;
  for (const auto& s : scenes) {
    const QuerySet qs = extract_ngrams(s.image.alt_text, cfg, s.image.id);
    raw.push_back(annotate_image_raw(s.image, qs, annotator, templates, cfg));
    total_gt += s.gt.size();
  }

  std::vector<SweepRow> table;
  for (double gate : gates) {
    PipelineConfig gated = cfg;
    gated.image_gate_threshold = gate;
    gated.keep_threshold = std::min(cfg.keep_threshold, gate);
    SweepRow row;
    row.gate = gate;
    std::size_t tp = 0, kept_total = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const FilterDecision decision = filter_annotations(raw[i].annotations, gated);
      if (!decision.image_retained) continue;
      ++row.images_retained;
      kept_total += decision.kept.size();
      // Greedy match against this scene's ground truth.
      std::vector<std::size_t> order(decision.kept.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return decision.kept[a].score > decision.kept[b].score;
      });
      std::vector<std::uint8_t> used(scenes[i].gt.size(), 0);
      for (std::size_t k : order) {
        const auto& ann = decision.kept[k];
        double best_iou = 0.0;
        std::size_t best = scenes[i].gt.size();
        for (std::size_t g = 0; g < scenes[i].gt.size(); ++g) {
          if (used[g] || scenes[i].gt[g].first != ann.label) continue;
          const double v = iou(ann.box, scenes[i].gt[g].second);
          if (v > best_iou) {
            best_iou = v;
            best = g;
          }
        }
        if (best != scenes[i].gt.size() && best_iou >= 0.5) {
          used[best] = 1;
          ++tp;
        }
      }
    }
    row.annotations_kept = kept_total;
    row.precision = kept_total ? static_cast<double>(tp) / static_cast<double>(kept_total) : 1.0;
    row.recall = total_gt ? static_cast<double>(tp) / static_cast<double>(total_gt) : 0.0;
    table.push_back(row);
  }
  return table;
}

}  // namespace ovpipe

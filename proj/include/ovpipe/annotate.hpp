#pragma once
// Pseudo-annotation machinery: prompt-template ensembling, best-query
// assignment, the two-threshold filter policy, pseudo-negative sampling,
// and the per-image annotation driver. The annotator itself is an
// abstract interface; a deterministic mock backed by known ground truth
// lives here, the external-process adapter in extern_annotator.hpp.

#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ovpipe/core.hpp"
#include "ovpipe/label_space.hpp"
#include "ovpipe/rng.hpp"

namespace ovpipe {

// Prompt templates, each with exactly one "{}" placeholder.
class TemplateSet {
 public:
  explicit TemplateSet(std::vector<std::string> templates)
      : templates_(std::move(templates)) {
    if (templates_.empty()) {
      throw std::invalid_argument("TemplateSet: no templates");
    }
    for (const auto& t : templates_) {
      if (placeholder_count(t) != 1) {
        throw std::invalid_argument(
            "TemplateSet: template must contain exactly one {} placeholder: " +
            t);
      }
    }
  }

  static TemplateSet default_set() {
    return TemplateSet({"a photo of a {}", "a photo of the {}",
                        "a picture of a {}", "a picture of the {}",
                        "a close-up photo of a {}", "a cropped photo of a {}",
                        "an image of a {}"});
  }

  std::size_t size() const { return templates_.size(); }
  const std::vector<std::string>& templates() const { return templates_; }

  std::string expand_one(std::size_t i, std::string_view query) const {
    const std::string& t = templates_.at(i);
    const std::size_t pos = t.find("{}");
    std::string out;
    out.reserve(t.size() + query.size());
    out.append(t, 0, pos);
    out.append(query);
    out.append(t, pos + 2, std::string::npos);
    return out;
  }

  // All queries that could have produced `prompt` under some template.
  std::vector<std::string> extract_candidates(std::string_view prompt) const {
    std::vector<std::string> out;
    for (const auto& t : templates_) {
      const std::size_t pos = t.find("{}");
      const std::string_view prefix(t.data(), pos);
      const std::string_view suffix(t.data() + pos + 2, t.size() - pos - 2);
      if (prompt.size() <= prefix.size() + suffix.size()) continue;
      if (prompt.substr(0, prefix.size()) != prefix) continue;
      if (prompt.substr(prompt.size() - suffix.size()) != suffix) continue;
      out.emplace_back(
          prompt.substr(prefix.size(), prompt.size() - prefix.size() - suffix.size()));
    }
    return out;
  }

 private:
  static int placeholder_count(std::string_view t) {
    int count = 0;
    for (std::size_t pos = 0; (pos = t.find("{}", pos)) != std::string_view::npos;
         pos += 2) {
      ++count;
    }
    return count;
  }

  std::vector<std::string> templates_;
};

// One prompt per template, placeholder substituted.
inline std::vector<std::string> expand_templates(std::string_view query,
                                                 const TemplateSet& t) {
  if (query.empty()) {
    throw std::invalid_argument("expand_templates: empty query");
  }
  std::vector<std::string> prompts;
  prompts.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    prompts.push_back(t.expand_one(i, query));
  }
  return prompts;
}

// Arithmetic mean of per-template scores.
inline double ensemble_scores(std::span<const double> per_template_scores,
                              std::size_t expected_arity) {
  if (per_template_scores.size() != expected_arity || expected_arity == 0) {
    throw std::invalid_argument("ensemble_scores: wrong arity");
  }
  double sum = 0.0;
  for (double s : per_template_scores) sum += s;
  return sum / static_cast<double>(expected_arity);
}

// Argmax query; ties broken by lowest index.
inline std::pair<std::string, double> assign_best_query(
    std::span<const double> scores, const std::vector<std::string>& queries) {
  if (queries.empty() || scores.size() != queries.size()) {
    throw std::invalid_argument("assign_best_query: empty or mismatched input");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return {queries[best], scores[best]};
}

struct FilterDecision {
  std::vector<PseudoAnnotation> kept;
  bool image_retained = false;
};

// Two-threshold policy: keep every annotation scoring at least
// keep_threshold, but only if some annotation reaches
// image_gate_threshold; otherwise the whole image is dropped. Both
// comparisons are inclusive.
inline FilterDecision filter_annotations(
    const std::vector<PseudoAnnotation>& annos, const PipelineConfig& cfg) {
  FilterDecision out;
  double max_score = -1.0;
  for (const auto& a : annos) max_score = std::max(max_score, a.score);
  out.image_retained = max_score >= cfg.image_gate_threshold;
  if (!out.image_retained) return out;
  for (const auto& a : annos) {
    if (a.score >= cfg.keep_threshold) out.kept.push_back(a);
  }
  return out;
}

struct NegativeSample {
  std::vector<std::string> queries;
  // True when the pool (after excluding the image's own queries) had
  // fewer entries than requested.
  bool short_draw = false;
};

// Draws n queries uniformly without replacement from pool entries that do
// not string-match any of the image's own queries.
inline NegativeSample sample_pseudo_negatives(
    const std::vector<std::string>& own_queries,
    const std::vector<std::string>& pool, std::size_t n, Rng& rng) {
  NegativeSample out;
  if (n == 0) return out;
  std::unordered_set<std::string_view> own(own_queries.begin(),
                                           own_queries.end());
  std::vector<std::string> eligible;
  for (const auto& q : pool) {
    if (!own.count(q)) eligible.push_back(q);
  }
  out.short_draw = eligible.size() < n;
  const std::size_t k = std::min(n, eligible.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
    out.queries.push_back(eligible[i]);
  }
  return out;
}

// A detection candidate: one box and one score per offered query string.
struct BoxCandidate {
  Box box;
  std::vector<double> scores;
};

// Scores a list of query strings against an image. Implementations must
// return, for every candidate box, a score vector aligned with `queries`
// with entries in [0, 1], and must be safe for concurrent invocation.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::vector<BoxCandidate> annotate(
      const ImageRecord& image, const std::vector<std::string>& queries) = 0;
};

namespace detail {

inline std::vector<BoxCandidate> run_annotator(const ImageRecord& img,
                                               Annotator& ann,
                                               const std::vector<std::string>& prompts) {
  std::vector<BoxCandidate> candidates;
  try {
    candidates = ann.annotate(img, prompts);
  } catch (const std::exception& e) {
    throw std::runtime_error("annotator failed for image '" + img.id +
                             "': " + e.what());
  }
  for (const auto& c : candidates) {
    if (!c.box.valid()) {
      throw std::runtime_error("annotator returned an invalid box for image '" +
                               img.id + "'");
    }
    if (c.scores.size() != prompts.size()) {
      throw std::runtime_error("annotator returned misaligned scores for image '" +
                               img.id + "'");
    }
    for (double s : c.scores) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw std::runtime_error("annotator returned score outside [0,1] for image '" +
                                 img.id + "'");
      }
    }
  }
  return candidates;
}

}  // namespace detail

// Runs the annotator over the template-expanded queries and assigns each
// candidate box its best query. No filtering; every candidate becomes one
// annotation.
inline AnnotatedImage annotate_image_raw(const ImageRecord& img,
                                         const QuerySet& qs, Annotator& ann,
                                         const TemplateSet& templates,
                                         const PipelineConfig& cfg) {
  if (templates.size() != static_cast<std::size_t>(cfg.template_count)) {
    throw std::invalid_argument("annotate_image: template set size " +
                                std::to_string(templates.size()) +
                                " != configured template_count " +
                                std::to_string(cfg.template_count));
  }
  AnnotatedImage out;
  out.image_id = img.id;
  if (qs.queries.empty()) return out;

  const std::size_t t_count = templates.size();
  std::vector<std::string> prompts;
  prompts.reserve(qs.queries.size() * t_count);
  for (const auto& q : qs.queries) {
    for (auto& p : expand_templates(q, templates)) prompts.push_back(std::move(p));
  }

  const auto candidates = detail::run_annotator(img, ann, prompts);
  const AnnotationOrigin origin = qs.source == QuerySource::curated
                                      ? AnnotationOrigin::curated
                                      : AnnotationOrigin::ngram;
  std::vector<double> per_query(qs.queries.size());
  for (const auto& c : candidates) {
    for (std::size_t q = 0; q < qs.queries.size(); ++q) {
      per_query[q] = ensemble_scores(
          std::span<const double>(c.scores.data() + q * t_count, t_count),
          t_count);
    }
    auto [label, score] = assign_best_query(per_query, qs.queries);
    out.annotations.push_back(PseudoAnnotation{c.box, label, score, origin});
  }
  return out;
}

// Full per-image pipeline: expand templates, annotate, ensemble, assign
// best query, then apply the two-threshold filter. A dropped image comes
// back with an empty annotation list.
inline AnnotatedImage annotate_image(const ImageRecord& img, const QuerySet& qs,
                                     Annotator& ann,
                                     const TemplateSet& templates,
                                     const PipelineConfig& cfg) {
  AnnotatedImage raw = annotate_image_raw(img, qs, ann, templates, cfg);
  FilterDecision decision = filter_annotations(raw.annotations, cfg);
  raw.annotations = std::move(decision.kept);
  return raw;
}

struct MockNoise {
  double box_sigma = 0.0;    // stddev of per-coordinate box jitter
  double score_noise = 0.0;  // scores get +U(-score_noise, score_noise)
  double base_score = 1.0;
};

// Deterministic stand-in for a neural annotator. Emits the known
// ground-truth boxes of an image with Gaussian coordinate jitter; each
// emitted box scores base * IoU(emitted, source ground truth) on queries
// equal to the source label and ~0 elsewhere, plus uniform noise, clamped
// to [0, 1]. Query strings are recovered from prompts via the template
// set. Seed-derived per-image streams make it safe for concurrent use.
class MockAnnotator : public Annotator {
 public:
  struct GtItem {
    std::string label;
    Box box;
  };

  MockAnnotator(TemplateSet templates, MockNoise noise, std::uint64_t seed)
      : templates_(std::move(templates)), noise_(noise), seed_(seed) {}

  void add_ground_truth(const std::string& image_id, std::vector<GtItem> items) {
    gt_[image_id] = std::move(items);
  }

  std::vector<BoxCandidate> annotate(
      const ImageRecord& image,
      const std::vector<std::string>& prompts) override {
    auto it = gt_.find(image.id);
    if (it == gt_.end()) return {};
    Rng rng(derive_seed(seed_, "mock:" + image.id));

    // Candidate queries each prompt could stand for, computed once.
    std::vector<std::vector<std::string>> prompt_queries(prompts.size());
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      prompt_queries[p] = templates_.extract_candidates(prompts[p]);
    }

    std::vector<BoxCandidate> out;
    out.reserve(it->second.size());
    for (const auto& gt : it->second) {
      BoxCandidate cand;
      cand.box = jitter_box(gt.box, rng);
      const double quality = noise_.base_score * iou(cand.box, gt.box);
      cand.scores.resize(prompts.size());
      for (std::size_t p = 0; p < prompts.size(); ++p) {
        double s = 0.0;
        for (const auto& q : prompt_queries[p]) {
          if (q == gt.label) {
            s = quality;
            break;
          }
        }
        if (noise_.score_noise > 0.0) {
          s += rng.uniform(-noise_.score_noise, noise_.score_noise);
        }
        cand.scores[p] = std::clamp(s, 0.0, 1.0);
      }
      out.push_back(std::move(cand));
    }
    return out;
  }

 private:
  Box jitter_box(const Box& b, Rng& rng) const {
    if (noise_.box_sigma <= 0.0) return b;
    constexpr double kMinSide = 1e-3;
    double x0 = std::clamp(b.x0 + rng.normal(0.0, noise_.box_sigma), 0.0, 1.0);
    double y0 = std::clamp(b.y0 + rng.normal(0.0, noise_.box_sigma), 0.0, 1.0);
    double x1 = std::clamp(b.x1 + rng.normal(0.0, noise_.box_sigma), 0.0, 1.0);
    double y1 = std::clamp(b.y1 + rng.normal(0.0, noise_.box_sigma), 0.0, 1.0);
    auto fix_axis = [](double& lo, double& hi) {
      if (hi - lo < kMinSide) {
        double c = std::clamp((lo + hi) / 2.0, kMinSide / 2.0, 1.0 - kMinSide / 2.0);
        lo = c - kMinSide / 2.0;
        hi = c + kMinSide / 2.0;
      }
    };
    fix_axis(x0, x1);
    fix_axis(y0, y1);
    return Box{x0, y0, x1, y1};
  }

  TemplateSet templates_;
  MockNoise noise_;
  std::uint64_t seed_;
  std::unordered_map<std::string, std::vector<GtItem>> gt_;
};

}  // namespace ovpipe

#pragma once
// Stage drivers shared by the CLI: deterministic parallel mapping over
// records, per-stage run reports, and the plumbing between store stages.
// Results are always collected in input order before writing, so output
// bytes do not depend on the worker count.

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ovpipe/annotate.hpp"
#include "ovpipe/eval.hpp"
#include "ovpipe/mosaic.hpp"
#include "ovpipe/sim.hpp"
#include "ovpipe/store.hpp"
#include "ovpipe/tokens.hpp"

namespace ovpipe {

struct RunReport {
  std::string stage;
  std::vector<std::string> input_manifests;
  std::string output_manifest;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  double retention = 1.0;
  double wall_time_s = 0.0;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();
};

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = nlohmann::json{{"stage", r.stage},
                     {"input_manifests", r.input_manifests},
                     {"output_manifest", r.output_manifest},
                     {"records_in", r.records_in},
                     {"records_out", r.records_out},
                     {"retention", r.retention},
                     {"wall_time_s", r.wall_time_s},
                     {"config_hash", r.config_hash},
                     {"extra", r.extra}};
}

// Applies fn to every index and returns results in index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, int jobs, Fn&& fn) {
  std::vector<T> results(n);
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int count = std::min<int>(jobs, static_cast<int>(n));
  threads.reserve(count);
  for (int t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

namespace pipeline_detail {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace pipeline_detail

// Generates synthetic scenes and writes the raw and gt stages of a new
// dataset.
inline RunReport run_sim_gen(const std::filesystem::path& dataset_dir,
                             const std::string& dataset_name, std::size_t n,
                             int scene_px, int shard_count,
                             const PipelineConfig& cfg, int jobs) {
  pipeline_detail::Timer timer;
  const SceneVocab vocab = SceneVocab::default_vocab();
  auto scenes = parallel_map<SyntheticScene>(n, jobs, [&](std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene-%06zu", i);
    Rng rng(derive_seed(cfg.rng_seed, std::string("scene:") + buf));
    return generate_scene(buf, scene_px, vocab, rng);
  });

  StageWriter raw_writer(dataset_dir / "raw", dataset_name, Stage::raw,
                         shard_count, cfg);
  StageWriter gt_writer(dataset_dir / "gt", dataset_name, Stage::gt,
                        shard_count, cfg);
  for (const auto& s : scenes) {
    raw_writer.add(s.image.id, encode_image(s.image));
    GtImage gt{s.image.id, s.gt};
    gt_writer.add(s.image.id, encode_gt(gt));
  }
  raw_writer.finish();
  gt_writer.finish();

  RunReport report;
  report.stage = "sim-gen";
  report.output_manifest = (dataset_dir / "raw" / "manifest.json").string();
  report.records_in = n;
  report.records_out = n;
  report.retention = 1.0;
  report.wall_time_s = timer.seconds();
  report.config_hash = config_hash(cfg);
  return report;
}

// raw -> queried: N-gram query extraction from alt-text.
inline RunReport run_queries_stage(const std::filesystem::path& raw_dir,
                                   const std::filesystem::path& out_dir,
                                   const PipelineConfig& cfg, int jobs) {
  pipeline_detail::Timer timer;
  StageReader reader(raw_dir);
  std::vector<std::pair<std::string, std::string>> inputs;  // (id, alt text)
  reader.for_each([&](const Record& rec) {
    if (rec.type != RecordType::image) return;
    const ImageRecord img = decode_image(rec);
    inputs.emplace_back(img.id, img.alt_text);
  });

  auto sets = parallel_map<QuerySet>(inputs.size(), jobs, [&](std::size_t i) {
    return extract_ngrams(inputs[i].second, cfg, inputs[i].first);
  });

  StageWriter writer(out_dir, reader.manifest().dataset, Stage::queried,
                     static_cast<int>(reader.manifest().shards.size()), cfg);
  for (const auto& qs : sets) writer.add(qs.image_id, encode_query_set(qs));
  writer.finish();

  RunReport report;
  report.stage = "queried";
  report.input_manifests = {(raw_dir / "manifest.json").string()};
  report.output_manifest = (out_dir / "manifest.json").string();
  report.records_in = inputs.size();
  report.records_out = sets.size();
  report.retention = 1.0;
  report.wall_time_s = timer.seconds();
  report.config_hash = config_hash(cfg);
  return report;
}

// (raw, queried) -> annotated: run the annotator over expanded prompts
// and assign best queries. No filtering happens here. When
// pseudo_negatives > 0, each image's query set is augmented with that
// many queries sampled from other images' sets.
inline RunReport run_annotate_stage(const std::filesystem::path& raw_dir,
                                    const std::filesystem::path& queried_dir,
                                    const std::filesystem::path& out_dir,
                                    Annotator& annotator,
                                    const TemplateSet& templates,
                                    const PipelineConfig& cfg, int jobs,
                                    std::size_t pseudo_negatives = 0) {
  pipeline_detail::Timer timer;
  StageReader queried(queried_dir);
  std::unordered_map<std::string, QuerySet> query_sets;
  std::vector<std::string> pool;  // all queries in stream order, tagged by owner
  std::vector<std::string> pool_owner;
  queried.for_each([&](const Record& rec) {
    if (rec.type != RecordType::query_set) return;
    QuerySet qs = decode_query_set(rec);
    for (const auto& q : qs.queries) {
      pool.push_back(q);
      pool_owner.push_back(qs.image_id);
    }
    query_sets.emplace(qs.image_id, std::move(qs));
  });

  StageReader raw(raw_dir);
  std::vector<ImageRecord> images;
  raw.for_each([&](const Record& rec) {
    if (rec.type != RecordType::image) return;
    images.push_back(decode_image(rec));
  });

  auto annotated =
      parallel_map<AnnotatedImage>(images.size(), jobs, [&](std::size_t i) {
        const ImageRecord& img = images[i];
        auto it = query_sets.find(img.id);
        if (it == query_sets.end()) {
          return AnnotatedImage{img.id, {}};
        }
        QuerySet qs = it->second;
        if (pseudo_negatives > 0) {
          // Exclude pool entries owned by this image, then sample.
          std::vector<std::string> other;
          other.reserve(pool.size());
          for (std::size_t p = 0; p < pool.size(); ++p) {
            if (pool_owner[p] != img.id) other.push_back(pool[p]);
          }
          Rng rng(derive_seed(cfg.rng_seed, "neg:" + img.id));
          auto negatives =
              sample_pseudo_negatives(qs.queries, other, pseudo_negatives, rng);
          for (auto& q : negatives.queries) qs.queries.push_back(std::move(q));
        }
        return annotate_image_raw(img, qs, annotator, templates, cfg);
      });

  StageWriter writer(out_dir, raw.manifest().dataset, Stage::annotated,
                     static_cast<int>(raw.manifest().shards.size()), cfg);
  for (const auto& a : annotated) writer.add(a.image_id, encode_annotated(a));
  writer.finish();

  RunReport report;
  report.stage = "annotated";
  report.input_manifests = {(raw_dir / "manifest.json").string(),
                            (queried_dir / "manifest.json").string()};
  report.output_manifest = (out_dir / "manifest.json").string();
  report.records_in = images.size();
  report.records_out = annotated.size();
  report.retention = 1.0;
  report.wall_time_s = timer.seconds();
  report.config_hash = config_hash(cfg);
  return report;
}

// annotated -> filtered: apply the two-threshold policy; dropped images
// are not written.
inline RunReport run_filter_stage(const std::filesystem::path& annotated_dir,
                                  const std::filesystem::path& out_dir,
                                  const PipelineConfig& cfg, int jobs) {
  pipeline_detail::Timer timer;
  (void)jobs;  // filtering is IO-bound; kept single-threaded
  StageReader reader(annotated_dir);
  std::vector<AnnotatedImage> inputs;
  reader.for_each([&](const Record& rec) {
    if (rec.type != RecordType::annotated) return;
    inputs.push_back(decode_annotated(rec));
  });

  StageWriter writer(out_dir, reader.manifest().dataset, Stage::filtered,
                     static_cast<int>(reader.manifest().shards.size()), cfg);
  std::uint64_t kept_images = 0;
  std::uint64_t annotations_in = 0, annotations_out = 0;
  for (const auto& a : inputs) {
    annotations_in += a.annotations.size();
    FilterDecision decision = filter_annotations(a.annotations, cfg);
    if (!decision.image_retained) continue;
    ++kept_images;
    annotations_out += decision.kept.size();
    AnnotatedImage out{a.image_id, std::move(decision.kept)};
    writer.add(out.image_id, encode_annotated(out));
  }
  writer.finish();

  RunReport report;
  report.stage = "filtered";
  report.input_manifests = {(annotated_dir / "manifest.json").string()};
  report.output_manifest = (out_dir / "manifest.json").string();
  report.records_in = inputs.size();
  report.records_out = kept_images;
  report.retention = inputs.empty() ? 1.0
                                    : static_cast<double>(kept_images) /
                                          static_cast<double>(inputs.size());
  report.wall_time_s = timer.seconds();
  report.config_hash = config_hash(cfg);
  report.extra = {{"annotations_in", annotations_in},
                  {"annotations_out", annotations_out}};
  return report;
}

// (raw, filtered) -> mosaic: deterministic plan stream over retained ids,
// parallel assembly.
inline RunReport run_mosaic_stage(const std::filesystem::path& raw_dir,
                                  const std::filesystem::path& filtered_dir,
                                  const std::filesystem::path& out_dir,
                                  const std::vector<int>& grid_sizes,
                                  const PipelineConfig& cfg, int jobs) {
  pipeline_detail::Timer timer;
  StageReader filtered(filtered_dir);
  std::vector<std::string> retained_ids;
  std::map<std::string, AnnotatedImage> annotations;
  filtered.for_each([&](const Record& rec) {
    if (rec.type != RecordType::annotated) return;
    AnnotatedImage a = decode_annotated(rec);
    retained_ids.push_back(a.image_id);
    annotations.emplace(a.image_id, std::move(a));
  });

  StageReader raw(raw_dir);
  std::unordered_map<std::string, ImageRecord> images;
  raw.for_each([&](const Record& rec) {
    if (rec.type != RecordType::image) return;
    ImageRecord img = decode_image(rec);
    images.emplace(img.id, std::move(img));
  });

  const auto plans = make_plans(retained_ids, grid_sizes, cfg, cfg.rng_seed);
  auto lookup = [&](const std::string& id) -> const ImageRecord* {
    auto it = images.find(id);
    return it == images.end() ? nullptr : &it->second;
  };
  auto examples =
      parallel_map<MosaicExample>(plans.size(), jobs, [&](std::size_t i) {
        return assemble_mosaic(plans[i], lookup, annotations, cfg);
      });

  StageWriter writer(out_dir, raw.manifest().dataset, Stage::mosaic,
                     static_cast<int>(raw.manifest().shards.size()), cfg);
  std::uint64_t tiles = 0;
  for (const auto& m : examples) {
    writer.add(m.id, encode_mosaic(m));
    tiles += m.layout.size();
  }
  writer.finish();

  RunReport report;
  report.stage = "mosaic";
  report.input_manifests = {(raw_dir / "manifest.json").string(),
                            (filtered_dir / "manifest.json").string()};
  report.output_manifest = (out_dir / "manifest.json").string();
  report.records_in = retained_ids.size();
  report.records_out = examples.size();
  report.retention = retained_ids.empty()
                         ? 1.0
                         : static_cast<double>(tiles) /
                               static_cast<double>(retained_ids.size());
  report.wall_time_s = timer.seconds();
  report.config_hash = config_hash(cfg);
  report.extra = {
      {"mean_tiles_per_example",
       examples.empty() ? 0.0
                        : static_cast<double>(tiles) /
                              static_cast<double>(examples.size())},
      {"analytic_mean_tiles", mean_tiles_per_example(grid_sizes)}};
  return report;
}

struct TokenStatsBin {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t patches = 0;
  std::uint64_t kept = 0;
};

struct TokenStats {
  std::vector<TokenStatsBin> bins;
  std::uint64_t records = 0;
  std::uint64_t patches = 0;
  std::uint64_t kept = 0;
};

// Kept-fraction histogram by patch variance over every pixel record of a
// stage (raw images or mosaic composites). Pixel variance of data in
// [0, 1] never exceeds 0.25, which fixes the bin range.
inline TokenStats run_token_stats(const std::filesystem::path& stage_dir,
                                  int patch_px, const PipelineConfig& cfg,
                                  int jobs, int bin_count = 20) {
  struct Item {
    std::string id;
    int width, height, channels;
    std::vector<float> pixels;
  };
  StageReader reader(stage_dir);
  std::vector<Item> items;
  reader.for_each([&](const Record& rec) {
    if (rec.type == RecordType::image) {
      ImageRecord img = decode_image(rec);
      items.push_back(Item{img.id, img.width, img.height, img.channels,
                           std::move(img.pixels)});
    } else if (rec.type == RecordType::mosaic) {
      MosaicExample m = decode_mosaic(rec);
      items.push_back(
          Item{m.id, m.width, m.height, m.channels, std::move(m.composite)});
    }
  });

  struct PerItem {
    std::vector<std::uint64_t> patches, kept;
  };
  auto per_item = parallel_map<PerItem>(items.size(), jobs, [&](std::size_t i) {
    const Item& item = items[i];
    Rng rng(derive_seed(cfg.rng_seed, "tokens:" + item.id));
    const PatchGrid grid =
        patch_variances(item.pixels, item.width, item.height, item.channels,
                        patch_px, cfg.noise_max, rng);
    const DropMask mask = drop_mask(grid, cfg.drop_rate);
    PerItem out;
    out.patches.assign(bin_count, 0);
    out.kept.assign(bin_count, 0);
    for (std::size_t p = 0; p < grid.variances.size(); ++p) {
      int bin = static_cast<int>(grid.variances[p] / 0.25 * bin_count);
      bin = std::clamp(bin, 0, bin_count - 1);
      ++out.patches[bin];
      if (mask.keep[p]) ++out.kept[bin];
    }
    return out;
  });

  TokenStats stats;
  stats.records = items.size();
  stats.bins.resize(bin_count);
  for (int b = 0; b < bin_count; ++b) {
    stats.bins[b].lo = 0.25 * b / bin_count;
    stats.bins[b].hi = 0.25 * (b + 1) / bin_count;
  }
  for (const auto& item : per_item) {
    for (int b = 0; b < bin_count; ++b) {
      stats.bins[b].patches += item.patches[b];
      stats.bins[b].kept += item.kept[b];
      stats.patches += item.patches[b];
      stats.kept += item.kept[b];
    }
  }
  return stats;
}

}  // namespace ovpipe

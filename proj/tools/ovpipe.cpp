// Pipeline CLI: every stage of the pseudo-annotation recipe as a
// composable subcommand. Stage outputs go to files; each invocation
// prints a RunReport JSON line as the last line of stdout. Exit codes:
// 0 success, 2 usage or configuration error, 1 data error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ovpipe/annotate.hpp"
#include "ovpipe/core.hpp"
#include "ovpipe/eval.hpp"
#include "ovpipe/extern_annotator.hpp"
#include "ovpipe/label_space.hpp"
#include "ovpipe/pipeline.hpp"
#include "ovpipe/schedule.hpp"
#include "ovpipe/sim.hpp"
#include "ovpipe/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  int jobs = 1;

  ovpipe::PipelineConfig overrides;
  CLI::Option* opt_keep = nullptr;
  CLI::Option* opt_gate = nullptr;
  CLI::Option* opt_rescale = nullptr;
  CLI::Option* opt_max_ngram_len = nullptr;
  CLI::Option* opt_max_num_queries = nullptr;
  CLI::Option* opt_drop_rate = nullptr;
  CLI::Option* opt_noise_max = nullptr;
  CLI::Option* opt_top_k = nullptr;
  CLI::Option* opt_grids_st = nullptr;
  CLI::Option* opt_grids_ft = nullptr;
  CLI::Option* opt_tile_scale = nullptr;
  std::vector<double> tile_scale_range;
  CLI::Option* opt_template_count = nullptr;
  CLI::Option* opt_lr_timescale = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_composite = nullptr;
  CLI::Option* opt_ngram_order = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "pipeline config JSON file");
    app.add_option("--jobs", jobs, "worker count (outputs are identical for any value)");
    opt_keep = app.add_option("--keep-threshold", overrides.keep_threshold);
    opt_gate = app.add_option("--image-gate-threshold", overrides.image_gate_threshold);
    opt_rescale = app.add_option("--curated-rescale-factor", overrides.curated_rescale_factor);
    opt_max_ngram_len = app.add_option("--max-ngram-len", overrides.max_ngram_len);
    opt_max_num_queries = app.add_option("--max-num-queries", overrides.max_num_queries);
    opt_drop_rate = app.add_option("--drop-rate", overrides.drop_rate);
    opt_noise_max = app.add_option("--noise-max", overrides.noise_max);
    opt_top_k = app.add_option("--instance-top-k", overrides.instance_top_k);
    opt_grids_st = app.add_option("--grid-sizes-selftrain", overrides.grid_sizes_selftrain)
                       ->delimiter(',');
    opt_grids_ft = app.add_option("--grid-sizes-finetune", overrides.grid_sizes_finetune)
                       ->delimiter(',');
    opt_tile_scale = app.add_option("--tile-scale-range", tile_scale_range)
                         ->delimiter(',')
                         ->expected(2);
    opt_template_count = app.add_option("--template-count", overrides.template_count);
    opt_lr_timescale = app.add_option("--lr-timescale", overrides.lr_timescale);
    opt_seed = app.add_option("--rng-seed", overrides.rng_seed);
    opt_composite = app.add_option("--composite-px", overrides.composite_px);
    opt_ngram_order = app.add_option("--ngram-order", overrides.ngram_order)
                          ->check(CLI::IsMember({"window", "length"}));
  }

  ovpipe::PipelineConfig build() const {
    ovpipe::PipelineConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
      json j;
      try {
        in >> j;
      } catch (const std::exception& e) {
        throw std::invalid_argument("bad config file: " + std::string(e.what()));
      }
      cfg = j.get<ovpipe::PipelineConfig>();
    }
    auto apply = [](CLI::Option* opt, auto& dst, const auto& src) {
      if (opt && opt->count() > 0) dst = src;
    };
    apply(opt_keep, cfg.keep_threshold, overrides.keep_threshold);
    apply(opt_gate, cfg.image_gate_threshold, overrides.image_gate_threshold);
    apply(opt_rescale, cfg.curated_rescale_factor, overrides.curated_rescale_factor);
    apply(opt_max_ngram_len, cfg.max_ngram_len, overrides.max_ngram_len);
    apply(opt_max_num_queries, cfg.max_num_queries, overrides.max_num_queries);
    apply(opt_drop_rate, cfg.drop_rate, overrides.drop_rate);
    apply(opt_noise_max, cfg.noise_max, overrides.noise_max);
    apply(opt_top_k, cfg.instance_top_k, overrides.instance_top_k);
    apply(opt_grids_st, cfg.grid_sizes_selftrain, overrides.grid_sizes_selftrain);
    apply(opt_grids_ft, cfg.grid_sizes_finetune, overrides.grid_sizes_finetune);
    if (opt_tile_scale && opt_tile_scale->count() > 0) {
      cfg.tile_scale_min = tile_scale_range.at(0);
      cfg.tile_scale_max = tile_scale_range.at(1);
    }
    apply(opt_template_count, cfg.template_count, overrides.template_count);
    apply(opt_lr_timescale, cfg.lr_timescale, overrides.lr_timescale);
    apply(opt_seed, cfg.rng_seed, overrides.rng_seed);
    apply(opt_composite, cfg.composite_px, overrides.composite_px);
    apply(opt_ngram_order, cfg.ngram_order, overrides.ngram_order);
    cfg.validate();
    return cfg;
  }
};

void print_report(const ovpipe::RunReport& report) {
  std::cout << json(report).dump() << "\n";
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::trunc);
  if (!file) throw std::runtime_error("cannot open output file: " + path);
  return file;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open input file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void require_stage_dir(const std::string& path) {
  if (!fs::is_regular_file(fs::path(path) / "manifest.json")) {
    throw std::invalid_argument("not a stage directory (no manifest.json): " + path);
  }
}

// Loads ground truth from a gt stage directory or a JSON-lines file with
// {"image_id", "class", "box"} records.
void load_ground_truth(const std::string& path, ovpipe::EvalTask& task) {
  if (fs::is_directory(path)) {
    require_stage_dir(path);
    ovpipe::StageReader reader(path);
    reader.for_each([&](const ovpipe::Record& rec) {
      if (rec.type != ovpipe::RecordType::gt) return;
      const ovpipe::GtImage gt = ovpipe::decode_gt(rec);
      for (const auto& [label, box] : gt.items) {
        task.ground_truth.push_back(ovpipe::GtBox{gt.image_id, label, box});
      }
    });
    return;
  }
  for (const auto& line : read_lines(path)) {
    const json j = json::parse(line);
    task.ground_truth.push_back(ovpipe::GtBox{j.at("image_id").get<std::string>(),
                                              j.at("class").get<std::string>(),
                                              j.at("box").get<ovpipe::Box>()});
  }
}

// Loads predictions from an annotated/filtered stage directory or a
// JSON-lines file with {"image_id", "class", "box", "score"} records.
void load_predictions(const std::string& path, ovpipe::EvalTask& task) {
  if (fs::is_directory(path)) {
    require_stage_dir(path);
    ovpipe::StageReader reader(path);
    reader.for_each([&](const ovpipe::Record& rec) {
      if (rec.type != ovpipe::RecordType::annotated) return;
      const ovpipe::AnnotatedImage a = ovpipe::decode_annotated(rec);
      for (const auto& ann : a.annotations) {
        task.predictions.push_back(
            ovpipe::Prediction{a.image_id, ann.label, ann.box, ann.score});
      }
    });
    return;
  }
  for (const auto& line : read_lines(path)) {
    const json j = json::parse(line);
    task.predictions.push_back(ovpipe::Prediction{
        j.at("image_id").get<std::string>(), j.at("class").get<std::string>(),
        j.at("box").get<ovpipe::Box>(), j.at("score").get<double>()});
  }
}

std::string csv_double(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"open-vocabulary self-training data pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  global.attach(app);

  // vocab merge
  auto* vocab = app.add_subcommand("vocab", "vocabulary tools")->require_subcommand(1);
  auto* vocab_merge = vocab->add_subcommand("merge", "merge class lists into one vocabulary");
  std::vector<std::string> vocab_inputs;
  std::string vocab_output;
  vocab_merge->add_option("inputs", vocab_inputs, "class list files, one name per line")
      ->required();
  vocab_merge->add_option("-o,--output", vocab_output, "output file (default stdout)");
  vocab_merge->callback([&] {
    const auto cfg = global.build();
    std::vector<std::vector<std::string>> lists;
    for (const auto& path : vocab_inputs) lists.push_back(read_lines(path));
    const auto merged = ovpipe::merge_curated(lists);
    std::ofstream file;
    std::ostream& out = open_output(file, vocab_output);
    for (const auto& cls : merged.classes) out << cls << "\n";
    std::size_t total_in = 0;
    for (const auto& l : lists) total_in += l.size();
    ovpipe::RunReport report;
    report.stage = "vocab-merge";
    report.input_manifests = vocab_inputs;
    report.output_manifest = vocab_output;
    report.records_in = total_in;
    report.records_out = merged.classes.size();
    report.retention = total_in ? static_cast<double>(merged.classes.size()) / total_in : 1.0;
    report.config_hash = ovpipe::config_hash(cfg);
    print_report(report);
  });

  // queries ngram
  auto* queries = app.add_subcommand("queries", "query-set tools")->require_subcommand(1);
  auto* queries_ngram = queries->add_subcommand("ngram", "extract N-gram query sets from alt-text");
  std::string q_input, q_output;
  queries_ngram->add_option("--input", q_input, "raw stage directory")->required();
  queries_ngram->add_option("--output", q_output, "queried stage directory")->required();
  queries_ngram->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(q_input);
    print_report(ovpipe::run_queries_stage(q_input, q_output, cfg, global.jobs));
  });

  // annotate
  auto* annotate = app.add_subcommand("annotate", "run an annotator over query sets");
  std::string a_images, a_queries, a_output, a_annotator = "mock", a_extern_cmd, a_gt;
  double a_box_sigma = 0.0, a_score_noise = 0.0;
  std::size_t a_negatives = 0;
  annotate->add_option("--images", a_images, "raw stage directory")->required();
  annotate->add_option("--queries", a_queries, "queried stage directory")->required();
  annotate->add_option("--output", a_output, "annotated stage directory")->required();
  annotate->add_option("--annotator", a_annotator, "mock|extern")
      ->check(CLI::IsMember({"mock", "extern"}));
  annotate->add_option("--extern-cmd", a_extern_cmd, "command for the extern annotator");
  annotate->add_option("--gt", a_gt, "gt stage directory (mock annotator)");
  annotate->add_option("--box-sigma", a_box_sigma, "mock box jitter stddev");
  annotate->add_option("--score-noise", a_score_noise, "mock score noise half-width");
  annotate->add_option("--pseudo-negatives", a_negatives,
                       "queries sampled from other images per image");
  annotate->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(a_images);
    require_stage_dir(a_queries);
    const ovpipe::TemplateSet templates = ovpipe::TemplateSet::default_set();
    std::unique_ptr<ovpipe::Annotator> annotator_impl;
    if (a_annotator == "mock") {
      if (a_gt.empty()) {
        throw std::invalid_argument("--annotator mock requires --gt");
      }
      require_stage_dir(a_gt);
      auto mock = std::make_unique<ovpipe::MockAnnotator>(
          templates, ovpipe::MockNoise{a_box_sigma, a_score_noise, 1.0},
          cfg.rng_seed);
      ovpipe::StageReader gt(a_gt);
      gt.for_each([&](const ovpipe::Record& rec) {
        if (rec.type != ovpipe::RecordType::gt) return;
        const ovpipe::GtImage g = ovpipe::decode_gt(rec);
        std::vector<ovpipe::MockAnnotator::GtItem> items;
        for (const auto& [label, box] : g.items) items.push_back({label, box});
        mock->add_ground_truth(g.image_id, std::move(items));
      });
      annotator_impl = std::move(mock);
    } else {
      if (a_extern_cmd.empty()) {
        throw std::invalid_argument("--annotator extern requires --extern-cmd");
      }
      annotator_impl = std::make_unique<ovpipe::ExternAnnotator>(a_extern_cmd);
    }
    print_report(ovpipe::run_annotate_stage(a_images, a_queries, a_output,
                                            *annotator_impl, templates, cfg,
                                            global.jobs, a_negatives));
  });

  // filter
  auto* filter = app.add_subcommand("filter", "apply the two-threshold annotation filter");
  std::string f_input, f_output;
  filter->add_option("--input", f_input, "annotated stage directory")->required();
  filter->add_option("--output", f_output, "filtered stage directory")->required();
  filter->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(f_input);
    print_report(ovpipe::run_filter_stage(f_input, f_output, cfg, global.jobs));
  });

  // mosaic
  auto* mosaic = app.add_subcommand("mosaic", "assemble grid mosaics from filtered annotations");
  std::string m_images, m_annotations, m_output, m_mode = "selftrain";
  std::vector<int> m_grids;
  mosaic->add_option("--images", m_images, "raw stage directory")->required();
  mosaic->add_option("--annotations", m_annotations, "filtered stage directory")->required();
  mosaic->add_option("--output", m_output, "mosaic stage directory")->required();
  mosaic->add_option("--grids", m_grids, "grid sizes (overrides --mode)")->delimiter(',');
  mosaic->add_option("--mode", m_mode, "selftrain|finetune grid set")
      ->check(CLI::IsMember({"selftrain", "finetune"}));
  mosaic->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(m_images);
    require_stage_dir(m_annotations);
    std::vector<int> grids = m_grids;
    if (grids.empty()) {
      grids = (m_mode == "finetune") ? cfg.grid_sizes_finetune
                                     : cfg.grid_sizes_selftrain;
    }
    for (int g : grids) {
      if (g <= 0) throw std::invalid_argument("grid sizes must be positive");
    }
    print_report(ovpipe::run_mosaic_stage(m_images, m_annotations, m_output,
                                          grids, cfg, global.jobs));
  });

  // tokens stats
  auto* tokens = app.add_subcommand("tokens", "token-dropping tools")->require_subcommand(1);
  auto* tokens_stats = tokens->add_subcommand("stats", "kept-fraction histogram by patch variance");
  std::string t_input, t_output;
  int t_patch = 14;
  tokens_stats->add_option("--input", t_input, "stage directory with pixel records")->required();
  tokens_stats->add_option("--patch-px", t_patch, "patch size in pixels");
  tokens_stats->add_option("-o,--output", t_output, "CSV output (default stdout)");
  tokens_stats->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(t_input);
    const auto stats = ovpipe::run_token_stats(t_input, t_patch, cfg, global.jobs);
    std::ofstream file;
    std::ostream& out = open_output(file, t_output);
    out << "variance_lo,variance_hi,patches,kept,kept_fraction\n";
    for (const auto& bin : stats.bins) {
      out << csv_double(bin.lo) << "," << csv_double(bin.hi) << "," << bin.patches
          << "," << bin.kept << ","
          << csv_double(bin.patches ? static_cast<double>(bin.kept) / bin.patches : 0.0)
          << "\n";
    }
    ovpipe::RunReport report;
    report.stage = "tokens-stats";
    report.input_manifests = {(fs::path(t_input) / "manifest.json").string()};
    report.output_manifest = t_output;
    report.records_in = stats.records;
    report.records_out = stats.records;
    report.config_hash = ovpipe::config_hash(cfg);
    report.extra = {{"patches", stats.patches},
                    {"kept", stats.kept},
                    {"kept_fraction",
                     stats.patches ? static_cast<double>(stats.kept) / stats.patches : 0.0}};
    print_report(report);
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "detection evaluation");
  std::string e_gt, e_pred, e_variant = "fixed", e_buckets, e_output;
  int e_per_image_cap = 300, e_per_class_cap = 10000;
  bool e_per_class = false;
  eval_cmd->add_option("--gt", e_gt, "gt stage directory or JSON-lines file")->required();
  eval_cmd->add_option("--predictions", e_pred, "stage directory or JSON-lines file")->required();
  eval_cmd->add_option("--variant", e_variant, "fixed|old")
      ->check(CLI::IsMember({"fixed", "old"}));
  eval_cmd->add_option("--buckets", e_buckets, "JSON file {class: rare|common|frequent}");
  eval_cmd->add_option("--per-image-cap", e_per_image_cap, "old-variant per-image cap");
  eval_cmd->add_option("--per-class-cap", e_per_class_cap, "fixed-variant per-class cap");
  eval_cmd->add_flag("--per-class", e_per_class, "also print per-class AP rows");
  eval_cmd->add_option("-o,--output", e_output, "CSV output (default stdout)");
  eval_cmd->callback([&] {
    const auto cfg = global.build();
    ovpipe::EvalTask task;
    load_ground_truth(e_gt, task);
    load_predictions(e_pred, task);
    if (!e_buckets.empty()) {
      std::ifstream in(e_buckets);
      if (!in) throw std::invalid_argument("cannot open buckets file: " + e_buckets);
      json j;
      in >> j;
      for (const auto& [cls, bucket] : j.items()) {
        task.class_buckets[cls] = ovpipe::bucket_from_string(bucket.get<std::string>());
      }
    }
    const ovpipe::APResult result = (e_variant == "old")
                                        ? ovpipe::ap_old(task, e_per_image_cap)
                                        : ovpipe::ap_fixed(task, e_per_class_cap);
    std::ofstream file;
    std::ostream& out = open_output(file, e_output);
    auto fmt = [&](const std::optional<double>& v) {
      return v ? csv_double(*v) : std::string();
    };
    out << "variant,ap_all,ap_rare,ap_common,ap_frequent\n";
    out << e_variant << "," << fmt(result.ap_all) << "," << fmt(result.ap_rare)
        << "," << fmt(result.ap_common) << "," << fmt(result.ap_frequent) << "\n";
    if (e_per_class) {
      out << "class,ap\n";
      for (const auto& [cls, ap] : result.per_class_ap) {
        out << cls << "," << csv_double(ap) << "\n";
      }
    }
    ovpipe::RunReport report;
    report.stage = "eval";
    report.input_manifests = {e_gt, e_pred};
    report.output_manifest = e_output;
    report.records_in = task.predictions.size();
    report.records_out = result.per_class_ap.size();
    report.config_hash = ovpipe::config_hash(cfg);
    report.extra = {{"variant", e_variant}};
    if (result.ap_all) report.extra["ap_all"] = *result.ap_all;
    print_report(report);
  });

  // ensemble
  auto* ensemble = app.add_subcommand("ensemble", "weight-space checkpoint averaging");
  std::string en_a, en_b, en_out;
  double en_alpha = 0.5;
  ensemble->add_option("ckpt_a", en_a, "first checkpoint (weight 1-alpha)")->required();
  ensemble->add_option("ckpt_b", en_b, "second checkpoint (weight alpha)")->required();
  ensemble->add_option("--alpha", en_alpha, "mixing coefficient for ckpt_b")->required();
  ensemble->add_option("-o,--output", en_out, "output checkpoint")->required();
  ensemble->callback([&] {
    const auto cfg = global.build();
    const auto a = ovpipe::load_checkpoint(en_a);
    const auto b = ovpipe::load_checkpoint(en_b);
    const auto avg = ovpipe::weight_average(a, b, en_alpha);
    ovpipe::save_checkpoint(avg, en_out);
    ovpipe::RunReport report;
    report.stage = "ensemble";
    report.input_manifests = {en_a, en_b};
    report.output_manifest = en_out;
    report.records_in = a.params.size() + b.params.size();
    report.records_out = avg.params.size();
    report.config_hash = ovpipe::config_hash(cfg);
    report.extra = {{"alpha", en_alpha}};
    print_report(report);
  });

  // lr-curve
  auto* lr_curve = app.add_subcommand("lr-curve", "emit the learning-rate schedule as CSV");
  double lr_peak = 1.0;
  long long lr_steps = 100000, lr_stride = 1000;
  long long lr_cd_start = -1, lr_cd_steps = 0;
  std::string lr_output;
  lr_curve->add_option("--peak", lr_peak, "peak learning rate")->required();
  lr_curve->add_option("--steps", lr_steps, "last step to emit");
  lr_curve->add_option("--stride", lr_stride, "step stride");
  lr_curve->add_option("--cooldown-start", lr_cd_start, "cooldown start step");
  lr_curve->add_option("--cooldown-steps", lr_cd_steps, "cooldown length in steps");
  lr_curve->add_option("-o,--output", lr_output, "CSV output (default stdout)");
  lr_curve->callback([&] {
    const auto cfg = global.build();
    ovpipe::ScheduleConfig schedule;
    schedule.peak_lr = lr_peak;
    schedule.timescale = cfg.lr_timescale;
    if (lr_cd_start >= 0) {
      schedule.cooldown = ovpipe::CooldownPhase{lr_cd_start, lr_cd_steps};
    }
    schedule.validate();
    if (lr_steps < 0 || lr_stride <= 0) {
      throw std::invalid_argument("lr-curve: bad steps/stride");
    }
    std::ofstream file;
    std::ostream& out = open_output(file, lr_output);
    out << "step,lr\n";
    std::uint64_t rows = 0;
    for (long long step = 0; step <= lr_steps; step += lr_stride) {
      out << step << "," << csv_double(ovpipe::lr_at(step, schedule)) << "\n";
      ++rows;
    }
    ovpipe::RunReport report;
    report.stage = "lr-curve";
    report.output_manifest = lr_output;
    report.records_out = rows;
    report.config_hash = ovpipe::config_hash(cfg);
    print_report(report);
  });

  // sim
  auto* sim = app.add_subcommand("sim", "synthetic-scene harness")->require_subcommand(1);

  auto* sim_gen = sim->add_subcommand("gen", "generate synthetic scenes as a dataset");
  std::string sg_output, sg_name = "sim";
  std::size_t sg_scenes = 100;
  int sg_scene_px = 96, sg_shards = 4;
  sim_gen->add_option("--output", sg_output, "dataset directory")->required();
  sim_gen->add_option("--scenes", sg_scenes, "scene count");
  sim_gen->add_option("--scene-px", sg_scene_px, "scene resolution");
  sim_gen->add_option("--shards", sg_shards, "shard count");
  sim_gen->add_option("--name", sg_name, "dataset name");
  sim_gen->callback([&] {
    const auto cfg = global.build();
    if (sg_scene_px < 16) throw std::invalid_argument("--scene-px too small");
    if (sg_shards < 1) throw std::invalid_argument("--shards must be positive");
    print_report(ovpipe::run_sim_gen(sg_output, sg_name, sg_scenes, sg_scene_px,
                                     sg_shards, cfg, global.jobs));
  });

  auto* sim_run = sim->add_subcommand("run", "threshold sweep over the full loop");
  std::size_t sr_scenes = 1000;
  int sr_scene_px = 96;
  double sr_box_sigma = 0.04, sr_score_noise = 0.02;
  std::vector<double> sr_gates = {0.0, 0.1, 0.3, 0.5, 0.7};
  std::string sr_output;
  sim_run->add_option("--scenes", sr_scenes, "scene count");
  sim_run->add_option("--scene-px", sr_scene_px, "scene resolution");
  sim_run->add_option("--box-sigma", sr_box_sigma, "annotator box jitter stddev");
  sim_run->add_option("--score-noise", sr_score_noise, "annotator score noise half-width");
  sim_run->add_option("--gates", sr_gates, "gate thresholds to sweep")->delimiter(',');
  sim_run->add_option("-o,--output", sr_output, "CSV output (default stdout)");
  sim_run->callback([&] {
    const auto cfg = global.build();
    const auto scenes = ovpipe::generate_scenes(
        sr_scenes, ovpipe::SceneVocab::default_vocab(), sr_scene_px, cfg.rng_seed);
    const ovpipe::TemplateSet templates = ovpipe::TemplateSet::default_set();
    const auto table = ovpipe::run_threshold_sweep(
        scenes, sr_gates, ovpipe::MockNoise{sr_box_sigma, sr_score_noise, 1.0},
        cfg, templates);
    std::ofstream file;
    std::ostream& out = open_output(file, sr_output);
    out << "gate,images_retained,annotations_kept,precision,recall\n";
    for (const auto& row : table) {
      out << csv_double(row.gate) << "," << row.images_retained << ","
          << row.annotations_kept << "," << csv_double(row.precision) << ","
          << csv_double(row.recall) << "\n";
    }
    ovpipe::RunReport report;
    report.stage = "sim-run";
    report.output_manifest = sr_output;
    report.records_in = sr_scenes;
    report.records_out = table.size();
    report.config_hash = ovpipe::config_hash(cfg);
    print_report(report);
  });

  // stats
  auto* stats = app.add_subcommand("stats", "summarize a stage directory");
  std::string st_input;
  stats->add_option("--input", st_input, "stage directory")->required();
  stats->callback([&] {
    const auto cfg = global.build();
    require_stage_dir(st_input);
    const ovpipe::Manifest manifest = ovpipe::read_manifest(st_input);
    std::uint64_t records = 0;
    for (const auto& s : manifest.shards) records += s.records;
    ovpipe::RunReport report;
    report.stage = "stats";
    report.input_manifests = {(fs::path(st_input) / "manifest.json").string()};
    report.records_in = records;
    report.records_out = records;
    report.config_hash = ovpipe::config_hash(cfg);
    report.extra = {{"dataset", manifest.dataset},
                    {"stage", ovpipe::to_string(manifest.stage)},
                    {"shards", manifest.shards.size()},
                    {"stored_config_hash", manifest.config_hash}};
    print_report(report);
  });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// thoughtflow command-line tool: data generation, training, tuning, flows,
// and the experiment drivers.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/errors.hpp"
#include "thoughtflow/experiments.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/io.hpp"
#include "thoughtflow/model.hpp"
#include "thoughtflow/trainer.hpp"
#include "thoughtflow/tuner.hpp"

namespace fs = std::filesystem;
using namespace thoughtflow;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct FlowOptions {
  std::size_t t_steps = 0;
  double t_js = kMaxJsDistance;
  double delta = kDefaultDelta;
  double epsilon = kDefaultEpsilon;
  std::size_t mc_samples = kDefaultMcSamples;
  std::string mode = "single-gradient";
  std::string referent = "consecutive";

  void add(CLI::App* app, bool thresholds) {
    if (thresholds) {
      app->add_option("--t-steps", t_steps, "Step budget");
      app->add_option("--t-js", t_js, "Jensen-Shannon distance threshold, at most sqrt(ln 2)");
    }
    app->add_option("--delta", delta, "Target L1 change of the probabilities per step");
    app->add_option("--epsilon", epsilon, "Step-width stabilizer");
    app->add_option("--mc-samples", mc_samples, "Gradient samples in mcdrop mode");
    app->add_option("--mode", mode, "single-gradient | mcdrop");
    app->add_option("--js-referent", referent, "consecutive | initial");
  }

  StoppingConfig config() const {
    if (t_js > kMaxJsDistance) {
      throw ConfigError("--t-js " + format_double(t_js) + " exceeds the largest JS distance sqrt(ln 2) = " +
                        format_double(kMaxJsDistance));
    }
    StoppingConfig c;
    c.t_steps = t_steps;
    c.t_js = t_js;
    c.delta = delta;
    c.epsilon = epsilon;
    c.mc_samples = mc_samples;
    c.mode = parse_gradient_mode(mode);
    c.referent = parse_js_referent(referent);
    c.validate();
    return c;
  }
};

struct TrainOptions {
  double lr;
  std::size_t batch_size = 32;
  std::size_t epochs;
  std::string optimizer = "adam";
  double positive_weight = 1.0;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--batch-size", batch_size, "Minibatch size");
    app->add_option("--epochs", epochs, "Epochs");
    app->add_option("--optimizer", optimizer, "adam | sgd");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.seed = seed;
    c.positive_weight = positive_weight;
    if (optimizer == "adam") {
      c.optimizer = OptimizerKind::adam;
    } else if (optimizer == "sgd") {
      c.optimizer = OptimizerKind::sgd;
    } else {
      throw ConfigError("unknown optimizer '" + optimizer + "'");
    }
    c.validate();
    return c;
  }
};

MetricsSink metrics_to(std::ostream& log) {
  return [&log](const EpochMetrics& m) {
    log << format_metrics_line(m) << '\n';
    log.flush();
  };
}

const Record& find_record(const Split& split, std::optional<std::uint64_t> id, std::size_t index) {
  if (id) {
    for (const auto& r : split.records) {
      if (r.id == *id) return r;
    }
    throw Error("no record with id " + std::to_string(*id) + " in split '" + split.name + "'");
  }
  if (index >= split.records.size()) {
    throw Error("index " + std::to_string(index) + " out of range for split '" + split.name +
                "' (" + std::to_string(split.records.size()) + " records)");
  }
  return split.records[index];
}

std::string prediction_line(const FlowTrace& t) {
  const std::size_t before = argmax(t.steps.front().probs);
  const std::size_t after = flow_prediction(t);
  std::string line = "instance=" + t.instance_id + " base=" + std::to_string(before) +
                     " flow=" + std::to_string(after) + " steps=" + std::to_string(t.steps.size()) +
                     " stop=" + to_string(t.stop_reason);
  if (t.gold) line += " gold=" + std::to_string(*t.gold);
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative logit refinement along the gradient of a correctness score"};
  app.require_subcommand(1);
  app.set_version_flag("--version", provenance());

  std::uint64_t seed = 0;
  std::string data_path, model_path, out_path, out_dir, split_name, metrics_path;
  FlowOptions flow;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic Gaussian dataset");
  std::string spec_path, preset = "benchmark3";
  bool write_spec = false;
  gen->add_option("--spec", spec_path, "SyntheticSpec JSON file");
  gen->add_option("--preset", preset, "benchmark3 | two-blobs (when --spec is absent)");
  gen->add_option("--seed", seed, "Generator seed (presets only; a spec file carries its own)");
  gen->add_option("-o,--out", out_path, "Dataset file")->required();
  gen->add_flag("--write-spec", write_spec, "Also write the effective spec next to the dataset");

  // train-base
  auto* tb = app.add_subcommand("train-base", "Train encoder and label module");
  TrainOptions base_opts{.lr = 3e-3, .epochs = 30};
  Architecture arch;
  tb->add_option("--data", data_path)->required();
  tb->add_option("-o,--out", out_path, "Model file")->required();
  tb->add_option("--seed", seed);
  tb->add_option("--metrics", metrics_path, "Metrics log (appended)");
  tb->add_option("--feature-dim", arch.feature_dim, "Encoder output dimension");
  tb->add_option("--encoder-hidden", arch.encoder_hidden, "Encoder hidden layer widths");
  tb->add_option("--label-hidden", arch.label_hidden);
  tb->add_option("--dropout", arch.dropout_rate, "Correction-module dropout on the encoding");
  base_opts.add(tb);

  // train-correction
  auto* tc = app.add_subcommand("train-correction", "Train the correctness module on a frozen backbone");
  TrainOptions corr_opts{.lr = 1e-3, .epochs = 10};
  tc->add_option("--data", data_path)->required();
  tc->add_option("--model", model_path)->required();
  tc->add_option("-o,--out", out_path, "Model file (defaults to --model)");
  tc->add_option("--split", split_name, "Training split")->default_val("train");
  tc->add_option("--seed", seed);
  tc->add_option("--metrics", metrics_path, "Metrics log (appended)");
  tc->add_option("--positive-weight", corr_opts.positive_weight, "Loss weight on the 'correct' class");
  corr_opts.add(tc);

  // tune
  auto* tune = app.add_subcommand("tune", "Grid search over t_steps and t_js");
  tune->add_option("--data", data_path)->required();
  tune->add_option("--model", model_path)->required();
  tune->add_option("--split", split_name)->default_val("val");
  tune->add_option("--seed", seed);
  tune->add_option("--out-dir", out_dir)->required();
  flow.add(tune, false);

  // flow
  auto* fl = app.add_subcommand("flow", "Run the flow on one instance or a whole split");
  std::optional<std::uint64_t> record_id;
  std::size_t record_index = 0;
  bool all = false;
  std::string thresholds_path;
  fl->add_option("--data", data_path)->required();
  fl->add_option("--model", model_path)->required();
  fl->add_option("--split", split_name)->default_val("test");
  fl->add_option("--id", record_id, "Record id");
  fl->add_option("--index", record_index, "Record position within the split");
  fl->add_flag("--all", all, "Every record of the split");
  fl->add_option("--seed", seed);
  fl->add_option("--trace-out", out_path, "Write FlowTrace JSON (array with --all)");
  flow.add(fl, true);

  // eval
  auto* ev = app.add_subcommand("eval", "Correction statistics under given thresholds");
  ev->add_option("--data", data_path)->required();
  ev->add_option("--model", model_path)->required();
  ev->add_option("--split", split_name)->default_val("test");
  ev->add_option("--thresholds", thresholds_path, "thresholds.json written by tune");
  ev->add_option("--seed", seed);
  ev->add_option("-o,--out", out_path, "Statistics CSV");
  flow.add(ev, true);

  // attack
  auto* at = app.add_subcommand("attack", "FGSM sweep");
  std::vector<double> epsilons = kDefaultFgsmLevels;
  at->add_option("--data", data_path)->required();
  at->add_option("--model", model_path)->required();
  at->add_option("--split", split_name)->default_val("test");
  at->add_option("--epsilons", epsilons, "Perturbation sizes");
  at->add_option("--seed", seed);
  at->add_option("--out-dir", out_dir)->required();
  flow.add(at, true);

  // shift
  auto* sh = app.add_subcommand("shift", "Label-shift experiment over several seeds");
  ShiftConfig shift;
  sh->add_option("--data", data_path, "Pool dataset")->required();
  sh->add_option("--out-dir", out_dir)->required();
  sh->add_option("--train-weights", shift.train_weights);
  sh->add_option("--eval-weights", shift.eval_weights);
  sh->add_option("--deltas", shift.deltas);
  sh->add_option("--seeds", shift.seeds);
  sh->add_option("--train-size", shift.train_size);
  sh->add_option("--val-size", shift.val_size);
  sh->add_option("--test-size", shift.test_size);
  flow.add(sh, false);

  // export-trace
  auto* ex = app.add_subcommand("export-trace", "Write one FlowTrace JSON for plotting");
  ex->add_option("--data", data_path)->required();
  ex->add_option("--model", model_path)->required();
  ex->add_option("--split", split_name)->default_val("test");
  ex->add_option("--id", record_id);
  ex->add_option("--index", record_index);
  ex->add_option("--seed", seed);
  ex->add_option("-o,--out", out_path)->required();
  flow.add(ex, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      SyntheticSpec spec;
      if (!spec_path.empty()) {
        spec = SyntheticSpec::from_json(read_json(spec_path));
      } else if (preset == "benchmark3") {
        spec = SyntheticSpec::benchmark3(seed);
      } else if (preset == "two-blobs") {
        spec = SyntheticSpec::two_blobs(6.0, 2, 1000, 500, 1000, seed);
      } else {
        throw ConfigError("unknown preset '" + preset + "'");
      }
      const Dataset ds = generate_synthetic(spec);
      save_dataset(out_path, ds);
      if (write_spec) write_json(fs::path(out_path).replace_extension(".spec.json"), spec.to_json());
      std::cout << "wrote " << out_path << " bayes_accuracy="
                << format_double(ds.manifest.info.value("bayes_accuracy", 0.0)) << '\n';

    } else if (tb->parsed()) {
      const Dataset ds = load_dataset(data_path);
      arch.input_dim = ds.manifest.input_dim;
      arch.num_classes = ds.manifest.num_classes;
      arch.identity_encoder = ds.manifest.features;
      std::ofstream log;
      if (!metrics_path.empty()) log.open(metrics_path, std::ios::app);
      const TrainConfig cfg = base_opts.config(seed);
      ModelBundle bundle = train_base(ds.split("train").records, arch, cfg,
                                      log.is_open() ? metrics_to(log) : MetricsSink{});
      save_bundle(out_path, bundle);
      std::cout << "train_accuracy=" << format_double(base_accuracy(bundle, ds.split("train").records));
      if (ds.has_split("val")) {
        std::cout << " val_accuracy=" << format_double(base_accuracy(bundle, ds.split("val").records));
      }
      std::cout << '\n';

    } else if (tc->parsed()) {
      const Dataset ds = load_dataset(data_path);
      ModelBundle bundle = load_bundle(model_path);
      std::ofstream log;
      if (!metrics_path.empty()) log.open(metrics_path, std::ios::app);
      train_correction(bundle, ds.split(split_name).records, corr_opts.config(seed),
                       log.is_open() ? metrics_to(log) : MetricsSink{});
      save_bundle(out_path.empty() ? model_path : out_path, bundle);
      if (ds.has_split("val")) {
        const auto& val = ds.split("val").records;
        std::cout << "val_auc="
                  << format_double(roc_auc(correctness_scores(bundle, val),
                                           make_correctness_labels(bundle, val)))
                  << '\n';
      }

    } else if (tune->parsed()) {
      const Dataset ds = load_dataset(data_path);
      const ModelBundle bundle = load_bundle(model_path);
      const StoppingConfig cfg = flow.config();
      const TunerGrid grid = evaluate_grid(bundle, ds.split(split_name).records, cfg, seed);
      const Thresholds th = select_thresholds(grid);
      const fs::path dir(out_dir);
      auto csv = open_out(dir / "grid.csv");
      write_grid_csv(csv, grid);
      write_json(dir / "grid.json", grid_metadata(grid, th, cfg, seed));
      write_json(dir / "thresholds.json",
                 {{"t_steps", th.t_steps}, {"t_js", th.t_js}, {"improvement", th.improvement}});
      write_json(dir / "manifest.json",
                 experiment_manifest("tune", {{"data", data_path}, {"model", model_path},
                                              {"split", split_name}, {"flow", to_json(cfg)}},
                                     {seed}));
      std::cout << "t_steps=" << th.t_steps << " t_js=" << format_double(th.t_js)
                << " improvement=" << format_double(th.improvement) << '\n';

    } else if (fl->parsed() || ex->parsed()) {
      const Dataset ds = load_dataset(data_path);
      const ModelBundle bundle = load_bundle(model_path);
      const StoppingConfig cfg = flow.config();
      const Split& split = ds.split(split_name);
      if (fl->parsed() && all) {
        std::vector<FlowTrace> traces;
        const auto stats = correction_stats(bundle, split.records, cfg, seed, &traces);
        for (const auto& t : traces) std::cout << prediction_line(t) << '\n';
        std::cout << "base_accuracy=" << format_double(stats.base_accuracy)
                  << " flow_accuracy=" << format_double(stats.flow_accuracy) << '\n';
        if (!out_path.empty()) {
          json arr = json::array();
          for (const auto& t : traces) arr.push_back(trace_to_json(t));
          write_json(out_path, arr);
        }
      } else {
        const Record& r = find_record(split, record_id, record_index);
        const FlowTrace t = run_flow(bundle, r.x, cfg, record_flow_seed(seed, r),
                                     std::to_string(r.id), r.label);
        if (!out_path.empty()) write_json(out_path, trace_to_json(t));
        std::cout << prediction_line(t) << '\n';
      }

    } else if (ev->parsed()) {
      const Dataset ds = load_dataset(data_path);
      const ModelBundle bundle = load_bundle(model_path);
      if (!thresholds_path.empty()) {
        const json th = read_json(thresholds_path);
        flow.t_steps = th.at("t_steps").get<std::size_t>();
        flow.t_js = th.at("t_js").get<double>();
      }
      const StoppingConfig cfg = flow.config();
      const auto stats = correction_stats(bundle, ds.split(split_name).records, cfg, seed);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_stats_csv(out, stats);
        write_json(fs::path(out_path).replace_extension(".manifest.json"),
                   experiment_manifest("eval", {{"data", data_path}, {"model", model_path},
                                                {"split", split_name}, {"flow", to_json(cfg)}},
                                       {seed}));
      }
      write_stats_csv(std::cout, stats);

    } else if (at->parsed()) {
      const Dataset ds = load_dataset(data_path);
      const ModelBundle bundle = load_bundle(model_path);
      const StoppingConfig cfg = flow.config();
      const auto rows = fgsm_sweep(bundle, ds.split(split_name).records, epsilons, cfg, seed);
      const fs::path dir(out_dir);
      auto out = open_out(dir / "fgsm.csv");
      write_fgsm_csv(out, rows);
      write_json(dir / "manifest.json",
                 experiment_manifest("attack", {{"data", data_path}, {"model", model_path},
                                                {"split", split_name}, {"epsilons", epsilons},
                                                {"flow", to_json(cfg)}},
                                     {seed}));
      write_fgsm_csv(std::cout, rows);

    } else if (sh->parsed()) {
      const Dataset ds = load_dataset(data_path);
      PipelineConfig pipeline;
      pipeline.flow = flow.config();
      const LabelShiftReport report = label_shift_run(ds, shift, pipeline);
      const fs::path dir(out_dir);
      auto summary = open_out(dir / "shift_summary.csv");
      write_shift_summary_csv(summary, report);
      auto runs = open_out(dir / "shift_runs.csv");
      write_shift_runs_csv(runs, report);
      write_json(dir / "manifest.json",
                 experiment_manifest("shift",
                                     {{"data", data_path},
                                      {"train_weights", shift.train_weights},
                                      {"eval_weights", shift.eval_weights},
                                      {"deltas", shift.deltas},
                                      {"sizes", {shift.train_size, shift.val_size, shift.test_size}},
                                      {"base_training", to_json(pipeline.base)},
                                      {"correction_training", to_json(pipeline.correction)},
                                      {"flow", to_json(pipeline.flow)},
                                      {"warnings", report.warnings}},
                                     shift.seeds));
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      write_shift_summary_csv(std::cout, report);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Command-line front end: dataset generation, label encoding, training,
// evaluation, sweeps, and loss debugging.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "icepll/data.hpp"
#include "icepll/experiment.hpp"
#include "icepll/labels.hpp"
#include "icepll/loss.hpp"
#include "icepll/metrics.hpp"
#include "icepll/net.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::size_t parallelism = std::max(1u, std::thread::hardware_concurrency());
  std::string profile = "desk";
  std::string out = "out";
};

struct Profile {
  std::size_t count;
  std::size_t patch;
  std::size_t epochs;
  std::size_t batch_size;
};

Profile profile_settings(const std::string& name) {
  if (name == "paper") return {127000, 50, 200, 512};
  return {6000, 16, 50, 128};  // desk
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw icepll::FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw icepll::FormatError("cannot write " + path.string());
  out << text;
}

icepll::LossConfig parse_loss(const std::string& kind, double alpha, double gamma) {
  if (kind == "cce") return icepll::LossConfig::cce();
  if (kind == "focal") return icepll::LossConfig::focal(alpha, gamma);
  throw icepll::FormatError("unknown loss kind: " + kind);
}

icepll::Encoding parse_encoding(const std::string& name) {
  if (name == "onehot") return icepll::Encoding::OneHot;
  if (name == "partial") return icepll::Encoding::ConfidencePartial;
  throw icepll::FormatError("unknown encoding: " + name);
}

icepll::ExperimentConfig experiment_from_json(const json& j, const Profile& prof,
                                              std::uint64_t default_seed) {
  icepll::ExperimentConfig cfg;
  cfg.encoding = parse_encoding(j.value("encoding", "partial"));
  const json loss = j.value("loss", json{{"kind", "focal"}, {"alpha", 0.25}, {"gamma", 1.0}});
  cfg.loss = parse_loss(loss.value("kind", "focal"), loss.value("alpha", 0.25),
                        loss.value("gamma", 1.0));
  cfg.class_weights_enabled = j.value("class_weights", false);
  cfg.train.epochs = j.value("epochs", prof.epochs);
  cfg.train.batch_size = j.value("batch_size", prof.batch_size);
  cfg.train.lr = j.value("lr", 1e-3);
  cfg.train.seed = j.value("seed", default_seed);
  cfg.train.loss = cfg.loss;
  cfg.repetitions = j.value("repetitions", std::size_t{1});
  return cfg;
}

int cmd_encode(const std::string& in_path, const std::string& out_path) {
  const auto records = icepll::load_polygon_file(in_path);
  const std::string csv = icepll::encode_polygons_csv(records);
  if (out_path == "-") {
    std::cout << csv;
  } else {
    spit(out_path, csv);
    std::printf("wrote %zu polygons to %s\n", records.size(), out_path.c_str());
  }
  return 0;
}

int cmd_gen_data(const GlobalOpts& g, const std::string& spec_path, double min_ca,
                 double min_border, const std::string& ratios_arg) {
  const Profile prof = profile_settings(g.profile);
  icepll::SyntheticSpec spec = icepll::SyntheticSpec::defaults();
  spec.count = prof.count;
  spec.patch = prof.patch;
  if (!spec_path.empty()) spec = icepll::synthetic_spec_from_json(slurp(spec_path));

  std::array<double, 3> ratios{0.81, 0.09, 0.10};
  if (!ratios_arg.empty()) {
    if (std::sscanf(ratios_arg.c_str(), "%lf,%lf,%lf", &ratios[0], &ratios[1], &ratios[2]) != 3)
      throw icepll::InvalidRatios("expected three comma-separated ratios");
  }

  icepll::Dataset ds;
  ds.samples = icepll::filter_samples(icepll::generate_synthetic(spec, g.seed), min_ca, min_border);
  if (ds.samples.empty()) throw icepll::EmptyDataset();
  ds.split = icepll::split(ds.samples.size(), ratios, g.seed);
  icepll::save_dataset(g.out, ds);
  spit(fs::path(g.out) / "spec.json", icepll::synthetic_spec_to_json(spec));

  const auto counts = icepll::class_counts(ds.samples);
  std::printf("dataset: %zu samples (%zu train / %zu val / %zu test) in %s\n", ds.samples.size(),
              ds.split.train.size(), ds.split.val.size(), ds.split.test.size(), g.out.c_str());
  std::printf("class counts:");
  for (std::size_t c = 0; c < icepll::kNumClasses; ++c)
    std::printf(" %s=%zu", icepll::kClassNames[c], counts[c]);
  std::printf("\n");
  return 0;
}

int cmd_ingest(const GlobalOpts& g, const std::string& raster_path, const std::string& ann_path,
               std::size_t patch, double min_ca, double min_border,
               const std::string& ratios_arg) {
  std::array<double, 3> ratios{0.81, 0.09, 0.10};
  if (!ratios_arg.empty()) {
    if (std::sscanf(ratios_arg.c_str(), "%lf,%lf,%lf", &ratios[0], &ratios[1], &ratios[2]) != 3)
      throw icepll::InvalidRatios("expected three comma-separated ratios");
  }
  icepll::Dataset ds;
  ds.samples = icepll::filter_samples(icepll::ingest_scene(raster_path, ann_path, patch), min_ca,
                                      min_border);
  if (ds.samples.empty()) throw icepll::EmptyDataset();
  ds.split = icepll::split(ds.samples.size(), ratios, g.seed);
  icepll::save_dataset(g.out, ds);
  std::printf("ingested %zu patches (%zu train / %zu val / %zu test) into %s\n",
              ds.samples.size(), ds.split.train.size(), ds.split.val.size(),
              ds.split.test.size(), g.out.c_str());
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& config_path) {
  const Profile prof = profile_settings(g.profile);
  const json j = json::parse(slurp(config_path));
  const std::string dataset_dir = j.at("dataset").get<std::string>();
  const icepll::Dataset ds = icepll::load_dataset(dataset_dir);
  icepll::ExperimentConfig cfg = experiment_from_json(j, prof, g.seed);

  const icepll::LabelKind kind = cfg.encoding == icepll::Encoding::OneHot
                                     ? icepll::LabelKind::OneHot
                                     : icepll::LabelKind::ConfidencePartial;
  auto inputs = icepll::gather_inputs(ds.samples, ds.split.train);
  auto labels = icepll::gather_labels(ds.samples, ds.split.train, kind);
  auto truths = icepll::gather_true_classes(ds.samples, ds.split.train);

  icepll::TrainConfig tc = cfg.train;
  if (cfg.class_weights_enabled) {
    tc.loss.class_weights =
        icepll::class_weights(icepll::class_counts(ds.samples, ds.split.train));
  }

  icepll::Network net(icepll::default_layer_spec(), tc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const icepll::History history = icepll::train(net, inputs, labels, truths, tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(g.out);
  icepll::save_checkpoint(net, (fs::path(g.out) / "checkpoint.tnet").string());
  spit(fs::path(g.out) / "history.json", icepll::history_to_json(history));
  json echo = j;
  echo["resolved_seed"] = tc.seed;
  echo["optimizer"] = {{"method", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
  spit(fs::path(g.out) / "train_config.json", echo.dump(2));

  std::printf("trained %zu epochs in %.1fs; final train accuracy %.4f; checkpoint in %s\n",
              history.size(), secs, history.back().train_accuracy, g.out.c_str());
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& checkpoint_path,
                 const std::string& dataset_dir, const std::string& subset) {
  const icepll::Network net = icepll::load_checkpoint(checkpoint_path);
  const icepll::Dataset ds = icepll::load_dataset(dataset_dir);
  const std::vector<std::size_t>* indices = nullptr;
  if (subset == "train") indices = &ds.split.train;
  else if (subset == "val") indices = &ds.split.val;
  else indices = &ds.split.test;
  if (indices->empty()) throw icepll::EmptyDataset();

  const auto inputs = icepll::gather_inputs(ds.samples, *indices);
  std::vector<std::size_t> preds;
  preds.reserve(inputs.size());
  const std::size_t bs = 256;
  const std::size_t stride = inputs[0].size();
  for (std::size_t start = 0; start < inputs.size(); start += bs) {
    const std::size_t count = std::min(bs, inputs.size() - start);
    std::vector<std::size_t> shape{count};
    for (std::size_t d : inputs[0].shape) shape.push_back(d);
    icepll::Tensor batch(shape);
    for (std::size_t b = 0; b < count; ++b) {
      std::copy(inputs[start + b].data.begin(), inputs[start + b].data.end(),
                batch.data.begin() + b * stride);
    }
    const auto p = net.predict(batch);
    preds.insert(preds.end(), p.begin(), p.end());
  }

  const auto truths = icepll::gather_true_classes(ds.samples, *indices);
  const auto cm = icepll::confusion(preds, truths, icepll::kNumClasses);
  const auto metrics = icepll::compute_metrics(cm);

  fs::create_directories(g.out);
  spit(fs::path(g.out) / ("metrics_" + subset + ".json"), icepll::metrics_to_json(metrics));
  spit(fs::path(g.out) / ("confusion_" + subset + ".csv"), icepll::confusion_to_csv(cm));
  std::printf("%s", icepll::metrics_to_table(metrics).c_str());
  return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& dataset_dir, const std::string& grid_arg,
              std::size_t repetitions) {
  const Profile prof = profile_settings(g.profile);
  const icepll::Dataset ds = icepll::load_dataset(dataset_dir);

  icepll::TrainConfig base;
  base.epochs = prof.epochs;
  base.batch_size = prof.batch_size;

  std::vector<icepll::ExperimentConfig> grid;
  if (grid_arg == "default") {
    grid = icepll::build_grid(base, repetitions);
  } else {
    const json doc = json::parse(slurp(grid_arg));
    for (const auto& item : doc) grid.push_back(experiment_from_json(item, prof, g.seed));
  }

  std::printf("sweep: %zu configurations, %zu worker(s)\n", grid.size(), g.parallelism);
  const auto reports = icepll::run_sweep(grid, ds, g.seed, g.parallelism);

  fs::create_directories(fs::path(g.out) / "reports");
  for (const auto& r : reports) {
    spit(fs::path(g.out) / "reports" / (r.config.name() + ".json"), icepll::report_to_json(r));
  }
  spit(fs::path(g.out) / "summary.csv", icepll::summary_csv(reports));

  const std::size_t best = icepll::best_report_index(reports);
  spit(fs::path(g.out) / "best.json", icepll::report_to_json(reports[best]));
  std::printf("best by weighted F1: %s (wf1 %.4f, accuracy %.4f)\n",
              reports[best].config.name().c_str(), reports[best].averaged.weighted_f1,
              reports[best].averaged.accuracy);

  const icepll::SensitivityReport sens = icepll::sensitivity_report(reports);
  if (!sens.curves.empty()) {
    fs::create_directories(fs::path(g.out) / "sensitivity");
    spit(fs::path(g.out) / "sensitivity" / "matrix.csv", icepll::sensitivity_matrix_csv(sens));
    for (const auto& curve : sens.curves) {
      char name[96];
      std::snprintf(name, sizeof(name), "curve_a%g_g%g_%s.csv", curve.alpha, curve.gamma,
                    icepll::encoding_name(curve.encoding));
      spit(fs::path(g.out) / "sensitivity" / name, icepll::sensitivity_curve_csv(curve));
    }
  }
  std::printf("summary: %s\n", (fs::path(g.out) / "summary.csv").string().c_str());
  return 0;
}

int cmd_loss_eval(const std::string& in_path, const std::string& kind, double alpha, double gamma,
                  const std::string& weights_arg) {
  icepll::LossConfig cfg = parse_loss(kind, alpha, gamma);
  if (!weights_arg.empty()) {
    icepll::Vec w;
    std::stringstream ss(weights_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) w.push_back(std::stod(tok));
    cfg.class_weights = w;
  }

  std::ifstream in(in_path);
  if (!in) throw icepll::FormatError("cannot open " + in_path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(std::stod(tok));
    if (fields.size() % 2 != 0 || fields.empty())
      throw icepll::FormatError("expected an even number of columns (logits then label)");
    const std::size_t l = fields.size() / 2;
    const icepll::Vec z(fields.begin(), fields.begin() + l);
    const icepll::Vec y(fields.begin() + l, fields.end());
    const double loss = icepll::loss_value(icepll::softmax(z), y, cfg);
    const icepll::Vec grad = icepll::loss_gradient(z, y, cfg);
    std::printf("%zu,%.12g", row, loss);
    for (double gv : grad) std::printf(",%.12g", gv);
    std::printf("\n");
    ++row;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confidence-aware partial-label training on chart-labeled ice patches"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--seed", g.seed, "base seed for everything derived");
  app.add_option("--parallelism", g.parallelism, "worker threads for sweeps");
  app.add_option("--profile", g.profile, "desk or paper scale defaults")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--out", g.out, "output directory");

  auto* encode = app.add_subcommand("encode", "polygon JSON -> label vector CSV");
  std::string encode_in, encode_out = "-";
  encode->add_option("--in", encode_in, "polygon JSON file")->required();
  encode->add_option("--csv", encode_out, "CSV path, - for stdout");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_spec, gen_ratios;
  double gen_min_ca = 0.5, gen_min_border = 2000.0;
  gen->add_option("--spec", gen_spec, "synthetic spec JSON (profile defaults otherwise)");
  gen->add_option("--min-ca", gen_min_ca, "dominance filter threshold");
  gen->add_option("--min-border", gen_min_border, "border distance filter, meters");
  gen->add_option("--ratios", gen_ratios, "train,val,test ratios (default 0.81,0.09,0.10)");

  auto* ingest = app.add_subcommand("ingest", "tile a scene raster + annotation into a dataset");
  std::string ingest_raster, ingest_ann, ingest_ratios;
  std::size_t ingest_patch = 50;
  double ingest_min_ca = 0.5, ingest_min_border = 2000.0;
  ingest->add_option("--raster", ingest_raster)->required();
  ingest->add_option("--annotation", ingest_ann)->required();
  ingest->add_option("--patch", ingest_patch, "tile size in pixels");
  ingest->add_option("--min-ca", ingest_min_ca, "dominance filter threshold");
  ingest->add_option("--min-border", ingest_min_border, "border distance filter, meters");
  ingest->add_option("--ratios", ingest_ratios, "train,val,test ratios");

  auto* train_cmd = app.add_subcommand("train", "train one model from a config JSON");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "training config JSON")->required();

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_dataset, eval_subset = "test";
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_dataset)->required();
  eval->add_option("--subset", eval_subset)->check(CLI::IsMember({"train", "val", "test"}));

  auto* sweep = app.add_subcommand("sweep", "run an experiment grid");
  std::string sweep_dataset, sweep_grid = "default";
  std::size_t sweep_reps = 2;
  sweep->add_option("--dataset", sweep_dataset)->required();
  sweep->add_option("--grid", sweep_grid, "'default' or a grid JSON file");
  sweep->add_option("--reps", sweep_reps, "repetitions per configuration");

  auto* loss_eval = app.add_subcommand("loss-eval", "losses and gradients for CSV rows");
  std::string le_in, le_kind = "cce", le_weights;
  double le_alpha = 0.25, le_gamma = 1.0;
  loss_eval->add_option("--in", le_in, "CSV of logits then label columns")->required();
  loss_eval->add_option("--loss", le_kind)->check(CLI::IsMember({"cce", "focal"}));
  loss_eval->add_option("--alpha", le_alpha);
  loss_eval->add_option("--gamma", le_gamma);
  loss_eval->add_option("--class-weights", le_weights, "comma-separated weights");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encode) return cmd_encode(encode_in, encode_out);
    if (*gen) return cmd_gen_data(g, gen_spec, gen_min_ca, gen_min_border, gen_ratios);
    if (*ingest)
      return cmd_ingest(g, ingest_raster, ingest_ann, ingest_patch, ingest_min_ca,
                        ingest_min_border, ingest_ratios);
    if (*train_cmd) return cmd_train(g, train_config);
    if (*eval) return cmd_evaluate(g, eval_ckpt, eval_dataset, eval_subset);
    if (*sweep) return cmd_sweep(g, sweep_dataset, sweep_grid, sweep_reps);
    if (*loss_eval) return cmd_loss_eval(le_in, le_kind, le_alpha, le_gamma, le_weights);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include "icepll/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "icepll/rng.hpp"
#include "json.hpp"

namespace icepll {

const char* encoding_name(Encoding e) {
  return e == Encoding::OneHot ? "onehot" : "partial";
}

std::string ExperimentConfig::name() const {
  char buf[128];
  if (loss.kind == LossKind::Focal) {
    std::snprintf(buf, sizeof(buf), "focal_a%g_g%g_%s%s", loss.alpha, loss.gamma,
                  encoding_name(encoding), class_weights_enabled ? "_cw" : "");
  } else {
    std::snprintf(buf, sizeof(buf), "cce_%s%s", encoding_name(encoding),
                  class_weights_enabled ? "_cw" : "");
  }
  return buf;
}

std::uint64_t ExperimentConfig::fingerprint() const {
  char buf[256];
  const int n = std::snprintf(buf, sizeof(buf), "%s|%d|%.17g|%.17g|%d|%zu|%zu|%.17g|%zu",
                              encoding_name(encoding), static_cast<int>(loss.kind), loss.alpha,
                              loss.gamma, class_weights_enabled ? 1 : 0, train.epochs,
                              train.batch_size, train.lr, repetitions);
  return fnv1a(buf, static_cast<std::size_t>(n));
}

std::vector<ExperimentConfig> build_grid(const TrainConfig& base, std::size_t repetitions) {
  std::vector<ExperimentConfig> grid;
  const Encoding encodings[2] = {Encoding::ConfidencePartial, Encoding::OneHot};

  for (Encoding enc : encodings) {
    for (bool weights : {true, false}) {
      ExperimentConfig cfg;
      cfg.encoding = enc;
      cfg.loss = LossConfig::cce();
      cfg.class_weights_enabled = weights;
      cfg.train = base;
      cfg.train.loss = cfg.loss;
      cfg.repetitions = repetitions;
      grid.push_back(cfg);
    }
  }
  const double alphas[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  const double gammas[] = {1.0, 2.0, 5.0};
  for (Encoding enc : encodings) {
    for (double alpha : alphas) {
      for (double gamma : gammas) {
        ExperimentConfig cfg;
        cfg.encoding = enc;
        cfg.loss = LossConfig::focal(alpha, gamma);
        cfg.class_weights_enabled = false;
        cfg.train = base;
        cfg.train.loss = cfg.loss;
        cfg.repetitions = repetitions;
        grid.push_back(cfg);
      }
    }
  }
  return grid;
}

namespace {

MetricsReport average_metrics(const std::vector<MetricsReport>& reps) {
  MetricsReport avg = reps.front();
  const double n = static_cast<double>(reps.size());
  for (std::size_t r = 1; r < reps.size(); ++r) {
    const MetricsReport& m = reps[r];
    avg.accuracy += m.accuracy;
    avg.weighted_precision += m.weighted_precision;
    avg.weighted_recall += m.weighted_recall;
    avg.weighted_f1 += m.weighted_f1;
    for (std::size_t i = 0; i < avg.per_class_f1.size(); ++i) {
      avg.per_class_precision[i] += m.per_class_precision[i];
      avg.per_class_recall[i] += m.per_class_recall[i];
      avg.per_class_f1[i] += m.per_class_f1[i];
    }
  }
  avg.accuracy /= n;
  avg.weighted_precision /= n;
  avg.weighted_recall /= n;
  avg.weighted_f1 /= n;
  for (std::size_t i = 0; i < avg.per_class_f1.size(); ++i) {
    avg.per_class_precision[i] /= n;
    avg.per_class_recall[i] /= n;
    avg.per_class_f1[i] /= n;
  }
  return avg;
}

nlohmann::json config_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["name"] = config.name();
  j["encoding"] = encoding_name(config.encoding);
  j["loss"] = config.loss.kind == LossKind::Focal ? "focal" : "cce";
  j["alpha"] = config.loss.alpha;
  j["gamma"] = config.loss.gamma;
  j["class_weights_enabled"] = config.class_weights_enabled;
  j["epochs"] = config.train.epochs;
  j["batch_size"] = config.train.batch_size;
  j["learning_rate"] = config.train.lr;
  j["optimizer"] = {{"method", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
  j["loss_reduction"] = "mean";
  j["repetitions"] = config.repetitions;
  return j;
}

nlohmann::json metrics_json(const MetricsReport& m) {
  return nlohmann::json::parse(metrics_to_json(m));
}

nlohmann::json report_json_impl(const RunReport& report, bool with_timing) {
  nlohmann::json j;
  j["config"] = config_json(report.config);
  j["seeds"] = report.seeds;
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& m : report.repetition_metrics) reps.push_back(metrics_json(m));
  j["repetition_metrics"] = reps;
  j["repetition_train_accuracy"] = report.repetition_train_accuracy;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : report.histories) hist.push_back(nlohmann::json::parse(history_to_json(h)));
  j["histories"] = hist;
  j["averaged"] = metrics_json(report.averaged);
  j["averaged_train_accuracy"] = report.averaged_train_accuracy;
  if (!report.class_weights_used.empty()) j["class_weights"] = report.class_weights_used;

  // Spread across repetitions for the headline metrics.
  auto spread = [&](auto getter) {
    double lo = getter(report.repetition_metrics.front());
    double hi = lo;
    for (const auto& m : report.repetition_metrics) {
      lo = std::min(lo, getter(m));
      hi = std::max(hi, getter(m));
    }
    return nlohmann::json{{"min", lo}, {"max", hi}};
  };
  j["spread"] = {{"accuracy", spread([](const MetricsReport& m) { return m.accuracy; })},
                 {"weighted_f1", spread([](const MetricsReport& m) { return m.weighted_f1; })}};

  if (with_timing) j["timing"] = {{"wall_seconds", report.wall_seconds}};
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
  return report_json_impl(report, true).dump(2);
}

std::string report_canonical_json(const RunReport& report) {
  return report_json_impl(report, false).dump(2);
}

RunReport run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                         std::uint64_t base_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  if (dataset.split.train.empty() || dataset.split.test.empty())
    throw EmptyDataset();

  const LabelKind kind = config.encoding == Encoding::OneHot ? LabelKind::OneHot
                                                             : LabelKind::ConfidencePartial;
  const auto train_inputs = gather_inputs(dataset.samples, dataset.split.train);
  const auto train_labels = gather_labels(dataset.samples, dataset.split.train, kind);
  const auto train_truth = gather_true_classes(dataset.samples, dataset.split.train);
  const auto test_inputs = gather_inputs(dataset.samples, dataset.split.test);
  const auto test_truth = gather_true_classes(dataset.samples, dataset.split.test);

  RunReport report;
  report.config = config;

  TrainConfig tc = config.train;
  tc.loss = config.loss;
  if (config.class_weights_enabled) {
    const auto counts = class_counts(dataset.samples, dataset.split.train, LabelKind::OneHot);
    tc.loss.class_weights = class_weights(counts);
    report.class_weights_used = *tc.loss.class_weights;
  }

  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    struct {
      std::uint64_t base;
      std::uint64_t fp;
      std::uint64_t rep;
    } key{base_seed, config.fingerprint(), rep};
    const std::uint64_t seed = splitmix64(fnv1a(&key, sizeof(key)));
    report.seeds.push_back(seed);

    Network net(default_layer_spec(), seed);
    tc.seed = seed;
    History history = train(net, train_inputs, train_labels, train_truth, tc);
    report.repetition_train_accuracy.push_back(history.back().train_accuracy);
    report.histories.push_back(std::move(history));

    // Evaluate on the test split in batches.
    std::vector<std::size_t> preds;
    preds.reserve(test_inputs.size());
    const std::size_t bs = std::min<std::size_t>(tc.batch_size, test_inputs.size());
    const std::size_t stride = test_inputs[0].size();
    for (std::size_t start = 0; start < test_inputs.size(); start += bs) {
      const std::size_t count = std::min(bs, test_inputs.size() - start);
      std::vector<std::size_t> shape;
      shape.push_back(count);
      for (std::size_t d : test_inputs[0].shape) shape.push_back(d);
      Tensor batch(shape);
      for (std::size_t b = 0; b < count; ++b) {
        const Tensor& src = test_inputs[start + b];
        std::copy(src.data.begin(), src.data.end(), batch.data.begin() + b * stride);
      }
      const auto p = net.predict(batch);
      preds.insert(preds.end(), p.begin(), p.end());
    }
    report.repetition_metrics.push_back(
        compute_metrics(confusion(preds, test_truth, kNumClasses)));
  }

  report.averaged = average_metrics(report.repetition_metrics);
  double acc_sum = 0.0;
  for (double a : report.repetition_train_accuracy) acc_sum += a;
  report.averaged_train_accuracy = acc_sum / static_cast<double>(config.repetitions);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<RunReport> run_sweep(const std::vector<ExperimentConfig>& grid, const Dataset& dataset,
                                 std::uint64_t base_seed, std::size_t parallelism) {
  std::vector<RunReport> reports(grid.size());
  if (grid.empty()) return reports;
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, grid.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) reports[i] = run_experiment(grid[i], dataset, base_seed);
    return reports;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= grid.size()) return;
        reports[i] = run_experiment(grid[i], dataset, base_seed);
      }
    });
  }
  for (auto& t : pool) t.join();
  return reports;
}

std::string summary_csv(const std::vector<RunReport>& reports) {
  std::string out =
      "name,encoding,loss,class_weights,alpha,gamma,repetitions,train_accuracy,test_accuracy,"
      "weighted_f1,weighted_precision,weighted_recall";
  for (const char* cls : kClassNames) {
    out += ",f1_";
    out += cls;
  }
  out += '\n';
  char buf[64];
  for (const auto& r : reports) {
    const auto& c = r.config;
    out += c.name();
    out += ',';
    out += encoding_name(c.encoding);
    out += ',';
    out += c.loss.kind == LossKind::Focal ? "focal" : "cce";
    out += ',';
    out += c.class_weights_enabled ? "yes" : "no";
    const double fields[] = {c.loss.alpha, c.loss.gamma};
    for (double v : fields) {
      std::snprintf(buf, sizeof(buf), ",%g", v);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%zu", c.repetitions);
    out += buf;
    const double metrics[] = {r.averaged_train_accuracy, r.averaged.accuracy,
                              r.averaged.weighted_f1,    r.averaged.weighted_precision,
                              r.averaged.weighted_recall};
    for (double v : metrics) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      out += buf;
    }
    for (double v : r.averaged.per_class_f1) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::size_t best_report_index(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw EmptyDataset();
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto& a = reports[i];
    const auto& b = reports[best];
    const auto key = [](const RunReport& r) {
      return std::make_tuple(-r.averaged.weighted_f1, -r.averaged.accuracy, r.config.loss.alpha,
                             r.config.loss.gamma);
    };
    if (key(a) < key(b)) best = i;
  }
  return best;
}

SensitivityReport sensitivity_report(const std::vector<RunReport>& reports) {
  SensitivityReport out;
  std::vector<const RunReport*> focal;
  for (const auto& r : reports) {
    if (r.config.loss.kind == LossKind::Focal) focal.push_back(&r);
  }
  auto insert_sorted = [](std::vector<double>& v, double x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) v.insert(it, x);
  };
  for (const auto* r : focal) {
    insert_sorted(out.alphas, r->config.loss.alpha);
    insert_sorted(out.gammas, r->config.loss.gamma);
  }
  out.weighted_f1.assign(out.alphas.size() * out.gammas.size(), 0.0);
  out.test_accuracy.assign(out.alphas.size() * out.gammas.size(), 0.0);
  std::vector<std::size_t> hits(out.weighted_f1.size(), 0);
  for (const auto* r : focal) {
    const std::size_t ai =
        std::lower_bound(out.alphas.begin(), out.alphas.end(), r->config.loss.alpha) -
        out.alphas.begin();
    const std::size_t gi =
        std::lower_bound(out.gammas.begin(), out.gammas.end(), r->config.loss.gamma) -
        out.gammas.begin();
    const std::size_t at = ai * out.gammas.size() + gi;
    out.weighted_f1[at] += r->averaged.weighted_f1;
    out.test_accuracy[at] += r->averaged.accuracy;
    ++hits[at];

    SensitivityReport::Curve curve;
    curve.alpha = r->config.loss.alpha;
    curve.gamma = r->config.loss.gamma;
    curve.encoding = r->config.encoding;
    const std::size_t epochs = r->histories.front().size();
    curve.mean_loss.assign(epochs, 0.0);
    curve.train_accuracy.assign(epochs, 0.0);
    for (const auto& h : r->histories) {
      for (std::size_t e = 0; e < epochs; ++e) {
        curve.mean_loss[e] += h[e].mean_loss;
        curve.train_accuracy[e] += h[e].train_accuracy;
      }
    }
    const double nrep = static_cast<double>(r->histories.size());
    for (double& v : curve.mean_loss) v /= nrep;
    for (double& v : curve.train_accuracy) v /= nrep;
    out.curves.push_back(std::move(curve));
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i] > 0) {
      out.weighted_f1[i] /= static_cast<double>(hits[i]);
      out.test_accuracy[i] /= static_cast<double>(hits[i]);
    }
  }
  return out;
}

std::string sensitivity_matrix_csv(const SensitivityReport& report) {
  char buf[64];
  std::string out = "alpha";
  for (double g : report.gammas) {
    std::snprintf(buf, sizeof(buf), ",wf1_gamma_%g", g);
    out += buf;
  }
  for (double g : report.gammas) {
    std::snprintf(buf, sizeof(buf), ",acc_gamma_%g", g);
    out += buf;
  }
  out += '\n';
  for (std::size_t ai = 0; ai < report.alphas.size(); ++ai) {
    std::snprintf(buf, sizeof(buf), "%g", report.alphas[ai]);
    out += buf;
    for (std::size_t gi = 0; gi < report.gammas.size(); ++gi) {
      std::snprintf(buf, sizeof(buf), ",%.6f", report.weighted_f1[ai * report.gammas.size() + gi]);
      out += buf;
    }
    for (std::size_t gi = 0; gi < report.gammas.size(); ++gi) {
      std::snprintf(buf, sizeof(buf), ",%.6f",
                    report.test_accuracy[ai * report.gammas.size() + gi]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string sensitivity_curve_csv(const SensitivityReport::Curve& curve) {
  std::string out = "epoch,mean_loss,train_accuracy\n";
  char buf[96];
  for (std::size_t e = 0; e < curve.mean_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", e, curve.mean_loss[e],
                  curve.train_accuracy[e]);
    out += buf;
  }
  return out;
}

}  // namespace icepll

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "icepll/experiment.hpp"

using namespace icepll;

namespace {

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 32;
  t.lr = 1e-3;
  return t;
}

// Small but learnable dataset so experiment tests stay quick.
Dataset tiny_dataset() {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.count = 240;
  spec.patch = 8;
  Dataset ds;
  ds.samples = generate_synthetic(spec, 77);
  ds.split = split(ds.samples.size(), {0.81, 0.09, 0.10}, 77);
  return ds;
}

ExperimentConfig tiny_config(Encoding enc, LossConfig loss, std::size_t reps) {
  ExperimentConfig cfg;
  cfg.encoding = enc;
  cfg.loss = loss;
  cfg.train = tiny_train();
  cfg.repetitions = reps;
  return cfg;
}

}  // namespace

TEST_CASE("default grid reproduces the experiment matrix") {
  const auto grid = build_grid(tiny_train(), 2);
  CHECK(grid.size() == 34);

  std::size_t cce = 0, focal_partial = 0, focal_onehot = 0, weighted = 0;
  std::set<std::pair<double, double>> focal_params;
  for (const auto& cfg : grid) {
    if (cfg.loss.kind == LossKind::CategoricalCrossEntropy) {
      ++cce;
      if (cfg.class_weights_enabled) ++weighted;
    } else {
      CHECK(!cfg.class_weights_enabled);
      focal_params.insert({cfg.loss.alpha, cfg.loss.gamma});
      if (cfg.encoding == Encoding::ConfidencePartial) {
        ++focal_partial;
      } else {
        ++focal_onehot;
      }
    }
    CHECK(cfg.repetitions == 2);
  }
  CHECK(cce == 4);
  CHECK(weighted == 2);
  CHECK(focal_partial == 15);
  CHECK(focal_onehot == 15);
  CHECK(focal_params.size() == 15);  // 5 alphas x 3 gammas

  // Names are unique and stable.
  std::set<std::string> names;
  for (const auto& cfg : grid) names.insert(cfg.name());
  CHECK(names.size() == grid.size());
  CHECK(names.count("cce_partial_cw") == 1);
  CHECK(names.count("focal_a0.25_g1_onehot") == 1);

  CHECK(build_grid(tiny_train(), 1).size() == 34);
}

TEST_CASE("single repetition averaging is the identity") {
  const Dataset ds = tiny_dataset();
  const auto cfg = tiny_config(Encoding::ConfidencePartial, LossConfig::focal(0.25, 1.0), 1);
  const RunReport report = run_experiment(cfg, ds, 5);

  REQUIRE(report.repetition_metrics.size() == 1);
  CHECK(report.averaged.accuracy == report.repetition_metrics[0].accuracy);
  CHECK(report.averaged.weighted_f1 == report.repetition_metrics[0].weighted_f1);
  CHECK(report.averaged_train_accuracy == report.repetition_train_accuracy[0]);
  CHECK(report.histories.size() == 1);
  CHECK(report.histories[0].size() == cfg.train.epochs);
  CHECK(report.seeds.size() == 1);
}

TEST_CASE("two repetitions average arithmetically and stay within the spread") {
  const Dataset ds = tiny_dataset();
  const auto cfg = tiny_config(Encoding::OneHot, LossConfig::cce(), 2);
  const RunReport report = run_experiment(cfg, ds, 6);

  REQUIRE(report.repetition_metrics.size() == 2);
  const double want =
      (report.repetition_metrics[0].accuracy + report.repetition_metrics[1].accuracy) / 2.0;
  CHECK(report.averaged.accuracy == doctest::Approx(want).epsilon(1e-12));

  const double lo = std::min(report.repetition_metrics[0].weighted_f1,
                             report.repetition_metrics[1].weighted_f1);
  const double hi = std::max(report.repetition_metrics[0].weighted_f1,
                             report.repetition_metrics[1].weighted_f1);
  CHECK(report.averaged.weighted_f1 >= lo - 1e-12);
  CHECK(report.averaged.weighted_f1 <= hi + 1e-12);

  // Repetition seeds differ but are reproducible.
  CHECK(report.seeds[0] != report.seeds[1]);
  const RunReport again = run_experiment(cfg, ds, 6);
  CHECK(again.seeds == report.seeds);
}

TEST_CASE("identical config and base seed give byte-identical canonical reports") {
  const Dataset ds = tiny_dataset();
  const auto cfg = tiny_config(Encoding::ConfidencePartial, LossConfig::focal(0.5, 2.0), 2);
  const RunReport a = run_experiment(cfg, ds, 9);
  const RunReport b = run_experiment(cfg, ds, 9);
  CHECK(report_canonical_json(a) == report_canonical_json(b));

  // The full serialization additionally carries timing.
  CHECK(report_to_json(a).find("wall_seconds") != std::string::npos);
  CHECK(report_canonical_json(a).find("wall_seconds") == std::string::npos);
}

TEST_CASE("class weight wiring satisfies the telescoping identity") {
  const Dataset ds = tiny_dataset();
  auto cfg = tiny_config(Encoding::OneHot, LossConfig::cce(), 1);
  cfg.class_weights_enabled = true;
  const RunReport report = run_experiment(cfg, ds, 4);

  REQUIRE(report.class_weights_used.size() == kNumClasses);
  const auto counts = class_counts(ds.samples, ds.split.train, LabelKind::OneHot);
  double acc = 0.0, n = 0.0;
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    acc += static_cast<double>(counts[j]) * report.class_weights_used[j];
    n += static_cast<double>(counts[j]);
  }
  CHECK(std::abs(acc - n) < 1e-9);
}

TEST_CASE("sweeps are invariant to parallelism and config position") {
  const Dataset ds = tiny_dataset();
  std::vector<ExperimentConfig> grid = {
      tiny_config(Encoding::OneHot, LossConfig::cce(), 1),
      tiny_config(Encoding::ConfidencePartial, LossConfig::focal(0.25, 1.0), 1),
      tiny_config(Encoding::ConfidencePartial, LossConfig::cce(), 1),
      tiny_config(Encoding::OneHot, LossConfig::focal(0.9, 5.0), 1),
  };

  const auto serial = run_sweep(grid, ds, 11, 1);
  const auto parallel = run_sweep(grid, ds, 11, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(report_canonical_json(serial[i]) == report_canonical_json(parallel[i]));
  }

  // Reversing the grid order leaves each config's report unchanged.
  std::vector<ExperimentConfig> reversed(grid.rbegin(), grid.rend());
  const auto rev = run_sweep(reversed, ds, 11, 2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(report_canonical_json(rev[grid.size() - 1 - i]) ==
          report_canonical_json(serial[i]));
  }

  CHECK(run_sweep({}, ds, 11, 4).empty());
}

TEST_CASE("summary table and best-row selection") {
  const Dataset ds = tiny_dataset();
  std::vector<ExperimentConfig> grid = {
      tiny_config(Encoding::OneHot, LossConfig::cce(), 1),
      tiny_config(Encoding::ConfidencePartial, LossConfig::focal(0.25, 1.0), 1),
  };
  const auto reports = run_sweep(grid, ds, 3, 2);
  const std::string csv = summary_csv(reports);
  CHECK(csv.find("name,encoding,loss,class_weights,alpha,gamma,repetitions,train_accuracy,"
                 "test_accuracy,weighted_f1,weighted_precision,weighted_recall,f1_new_ice") == 0);
  CHECK(csv.find("cce_onehot,") != std::string::npos);
  CHECK(csv.find("focal_a0.25_g1_partial,") != std::string::npos);

  // Selection prefers weighted F1, then accuracy, then the smaller (alpha,
  // gamma); exercised on synthetic reports so each rule is hit.
  auto mk = [&](double wf1, double acc, double alpha, double gamma) {
    RunReport r;
    r.config = tiny_config(Encoding::OneHot, LossConfig::focal(alpha, gamma), 1);
    r.averaged.weighted_f1 = wf1;
    r.averaged.accuracy = acc;
    return r;
  };
  std::vector<RunReport> fixture;
  fixture.push_back(mk(0.90, 0.90, 0.75, 5));
  fixture.push_back(mk(0.95, 0.90, 0.50, 2));  // dominant
  fixture.push_back(mk(0.95, 0.80, 0.10, 1));
  CHECK(best_report_index(fixture) == 1);

  fixture.clear();
  fixture.push_back(mk(0.95, 0.90, 0.50, 2));
  fixture.push_back(mk(0.95, 0.95, 0.75, 5));  // better accuracy wins the tie
  CHECK(best_report_index(fixture) == 1);

  fixture.clear();
  fixture.push_back(mk(0.95, 0.90, 0.50, 2));
  fixture.push_back(mk(0.95, 0.90, 0.25, 5));  // lower alpha wins the full tie
  CHECK(best_report_index(fixture) == 1);

  CHECK(best_report_index(reports) < reports.size());
}

TEST_CASE("sensitivity report groups the focal grid") {
  // Synthesize focal reports over the full grid without training.
  std::vector<RunReport> reports;
  const double alphas[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  const double gammas[] = {1, 2, 5};
  for (double a : alphas) {
    for (double g : gammas) {
      RunReport r;
      r.config = tiny_config(Encoding::ConfidencePartial, LossConfig::focal(a, g), 1);
      r.averaged.weighted_f1 = a + g / 10.0;
      r.averaged.accuracy = a;
      r.histories = {{{0, 1.0, 0.3}, {1, 0.8, 0.5}, {2, 0.6, 0.7}}};
      reports.push_back(std::move(r));
    }
  }
  // A cross-entropy report in the mix is ignored.
  RunReport cce;
  cce.config = tiny_config(Encoding::OneHot, LossConfig::cce(), 1);
  cce.histories = {{{0, 1.0, 0.3}}};
  reports.push_back(cce);

  const SensitivityReport s = sensitivity_report(reports);
  CHECK(s.alphas == std::vector<double>{0.1, 0.25, 0.5, 0.75, 0.9});
  CHECK(s.gammas == std::vector<double>{1, 2, 5});
  REQUIRE(s.weighted_f1.size() == 15);
  CHECK(s.weighted_f1[0 * 3 + 0] == doctest::Approx(0.1 + 0.1));
  CHECK(s.weighted_f1[4 * 3 + 2] == doctest::Approx(0.9 + 0.5));
  REQUIRE(s.curves.size() == 15);
  CHECK(s.curves[0].mean_loss.size() == 3);  // curve length equals epochs

  const std::string matrix = sensitivity_matrix_csv(s);
  CHECK(matrix.find("alpha,wf1_gamma_1,wf1_gamma_2,wf1_gamma_5") == 0);
  const std::string curve = sensitivity_curve_csv(s.curves[0]);
  CHECK(curve.find("epoch,mean_loss,train_accuracy") == 0);

  // A single report collapses to a 1x1 matrix.
  const SensitivityReport one = sensitivity_report({reports[0]});
  CHECK(one.alphas.size() == 1);
  CHECK(one.gammas.size() == 1);
  CHECK(one.weighted_f1.size() == 1);
}

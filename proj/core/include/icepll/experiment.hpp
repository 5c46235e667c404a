#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icepll/data.hpp"
#include "icepll/loss.hpp"
#include "icepll/metrics.hpp"
#include "icepll/net.hpp"

namespace icepll {

// The two label encodings the experiment matrix compares.
enum class Encoding { OneHot, ConfidencePartial };

const char* encoding_name(Encoding e);

struct ExperimentConfig {
  Encoding encoding = Encoding::OneHot;
  LossConfig loss;
  bool class_weights_enabled = false;
  TrainConfig train;
  std::size_t repetitions = 1;

  // Stable, filesystem-safe identifier, e.g. "focal_a0.25_g1_partial".
  std::string name() const;
  std::uint64_t fingerprint() const;
};

// The default experiment matrix: 4 cross-entropy configurations
// (encoding x class weights) plus 15 + 15 focal configurations
// (encoding x alpha in {0.1, 0.25, 0.5, 0.75, 0.9} x gamma in {1, 2, 5}).
std::vector<ExperimentConfig> build_grid(const TrainConfig& base, std::size_t repetitions);

struct RunReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> repetition_metrics;
  std::vector<double> repetition_train_accuracy;  // final epoch
  std::vector<History> histories;
  MetricsReport averaged;
  double averaged_train_accuracy = 0.0;
  std::vector<double> class_weights_used;  // empty when weights disabled
  double wall_seconds = 0.0;
};

// Full JSON including timing.
std::string report_to_json(const RunReport& report);
// Deterministic form with the timing block removed; any two runs of the same
// configuration and base seed compare byte-identical on this string.
std::string report_canonical_json(const RunReport& report);

// Trains `repetitions` networks and evaluates each on the test split; the
// averaged block is the arithmetic mean over repetitions. Per-repetition
// seeds hash (base_seed, config fingerprint, repetition).
RunReport run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                         std::uint64_t base_seed);

// Runs every configuration, optionally across worker threads. Results are
// ordered like the grid and independent of the parallelism level.
std::vector<RunReport> run_sweep(const std::vector<ExperimentConfig>& grid, const Dataset& dataset,
                                 std::uint64_t base_seed, std::size_t parallelism);

// Summary table, one row per configuration, fixed column order (documented in
// the README).
std::string summary_csv(const std::vector<RunReport>& reports);

// Best row by weighted F1; ties fall to test accuracy, then lowest (alpha,
// gamma), then grid order.
std::size_t best_report_index(const std::vector<RunReport>& reports);

// Focal-loss sensitivity: metric matrices over the (alpha, gamma) grid plus
// per-configuration training curves.
struct SensitivityReport {
  std::vector<double> alphas;  // sorted ascending
  std::vector<double> gammas;  // sorted ascending
  // Row-major [alpha][gamma]; entries are averaged over matching reports.
  std::vector<double> weighted_f1;
  std::vector<double> test_accuracy;
  struct Curve {
    double alpha = 0.0;
    double gamma = 0.0;
    Encoding encoding = Encoding::OneHot;
    std::vector<double> mean_loss;       // per epoch, averaged over repetitions
    std::vector<double> train_accuracy;  // per epoch, averaged over repetitions
  };
  std::vector<Curve> curves;
};

SensitivityReport sensitivity_report(const std::vector<RunReport>& reports);

std::string sensitivity_matrix_csv(const SensitivityReport& report);
std::string sensitivity_curve_csv(const SensitivityReport::Curve& curve);

}  // namespace icepll

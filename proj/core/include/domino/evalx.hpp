#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "domino/gp.hpp"
#include "domino/magma.hpp"
#include "domino/metrics.hpp"
#include "domino/series.hpp"
#include "domino/walk.hpp"

namespace domino::evalx {

struct StudyConfig {
  std::vector<std::size_t> lengths{50, 100, 150, 200, 250};
  std::size_t runs = 10;
  std::size_t series_count = 10;
  double prefix_fraction = 0.5;
  std::uint64_t seed = 20240601;

  double grid_start = 0.0;
  double grid_step = 1.0;
  series::SyntheticSpec synthetic;  // its seed is replaced per (run, length)
  magma::EmConfig em;
  gp::OptimizerConfig predict_optimizer{3, 100, 1e-6};
  walk::DominoConfig domino;

  std::size_t ablation_length = 100;
  bool ablation_cv = true;

  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

// Seed for cell (run, length, fold): derive_seed(base, {run, length, fold}).
std::uint64_t cell_seed(std::uint64_t base, std::size_t run, std::size_t length, std::size_t fold) noexcept;
// Dataset seed shared by every fold of (run, length).
std::uint64_t dataset_seed(std::uint64_t base, std::size_t run, std::size_t length) noexcept;
// Series held out by the length study for (run, length).
std::size_t holdout_index(const StudyConfig& config, std::size_t run, std::size_t length) noexcept;
std::size_t prefix_length(double prefix_fraction, std::size_t n);

// One posterior draw per training individual; the source noise is the
// root mean of the fitted individual noise variances.
walk::SampleBank make_bank(const magma::MagmaModel& model, const series::Dataset& train, std::uint64_t seed);

struct RunScore {
  std::size_t length = 0;
  std::string method;
  std::string setting;  // "" outside ablations, e.g. "lambda=0.5"
  std::size_t run = 0;
  std::size_t fold = 0;  // index of the held-out series
  double mae = 0.0;
};

struct StudyRow {
  std::size_t length = 0;
  std::string method;
  std::string setting;
  double mean_mae = 0.0;
  double std_mae = 0.0;       // sample std over runs; 0 for a single run
  std::vector<double> maes;   // one per run (fold average for CV)
  bool single_run = false;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<RunScore> scores;

  const StudyRow* find(std::size_t length, std::string_view method, std::string_view setting = {}) const;
};

// Aggregates per-fold scores into rows keyed by (length, method, setting),
// ordered by length, then setting, then method name as first seen.
StudyResult aggregate(std::vector<RunScore> scores);

StudyResult run_length_study(const StudyConfig& config);
StudyResult run_cv_study(const StudyConfig& config);

enum class Hyperparameter { max_epochs, delta, outlier_fraction, lambda };

std::string_view to_string(Hyperparameter hp) noexcept;
std::optional<Hyperparameter> parse_hyperparameter(std::string_view s) noexcept;
std::vector<double> default_grid(Hyperparameter hp);
walk::DominoConfig default_domino_config();
walk::DominoConfig with_hyperparameter(walk::DominoConfig base, Hyperparameter hp, double value);
std::string setting_label(Hyperparameter hp, double value);

// Sweeps one DOMINO hyperparameter with the others at their defaults, at
// config.ablation_length. Rows: method "domino" (hold-out) and, when
// config.ablation_cv, "domino_cv" (leave-one-out), one per value.
StudyResult run_ablation(Hyperparameter hp, const std::vector<double>& values, const StudyConfig& config);

void write_scores_csv(std::ostream& out, const StudyResult& result);
void write_summary_csv(std::ostream& out, const StudyResult& result);
// One row per length (or per setting), one "mean (std)" column per method.
void write_markdown(std::ostream& out, const StudyResult& result, std::string_view title);

}  // namespace domino::evalx

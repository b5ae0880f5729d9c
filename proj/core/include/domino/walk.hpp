#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "domino/random.hpp"
#include "domino/series.hpp"

// Weighted random walk over an ensemble of sample paths. Each epoch copies,
// point by point, the value of a categorically drawn path; the walk is then
// scored against every path and the draw weights are updated
// multiplicatively from those scores and from past visit counts.
namespace domino::walk {

using series::TimeGrid;
using series::TimeSeries;

class SampleBank {
 public:
  SampleBank(TimeGrid grid, std::vector<Eigen::VectorXd> paths, double source_noise_std);

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<Eigen::VectorXd>& paths() const noexcept { return paths_; }
  const Eigen::VectorXd& path(std::size_t i) const { return paths_[i]; }
  std::size_t count() const noexcept { return paths_.size(); }
  std::size_t length() const noexcept { return grid_.size(); }
  double source_noise_std() const noexcept { return source_noise_std_; }
  double value_min() const noexcept { return min_; }
  double value_max() const noexcept { return max_; }
  double range() const noexcept { return max_ - min_; }

 private:
  TimeGrid grid_;
  std::vector<Eigen::VectorXd> paths_;
  double source_noise_std_;
  double min_;
  double max_;
};

enum class VisitNormalizer { walk_length, series_count };
enum class PerformanceKind { inverse_mae };

struct DominoConfig {
  std::size_t max_epochs = 30;
  double delta_fraction = 0.05;
  double outlier_fraction = 0.03;
  double lambda = 0.5;
  VisitNormalizer visit_normalizer = VisitNormalizer::walk_length;
  PerformanceKind performance_kind = PerformanceKind::inverse_mae;
  // Walks whose pointwise median forms a forecast; 1 is a single walk.
  std::size_t forecast_walks = 50;

  void validate() const;
};

struct Walk {
  Eigen::VectorXd values;
  std::vector<std::size_t> indices;  // 0-based path index per grid point
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  Eigen::VectorXd walk_values;
  std::vector<std::size_t> walk_indices;  // 0-based in memory, 1-based on disk
  Eigen::VectorXd performances;
  double mean_performance = 0.0;
  Eigen::VectorXd weights;
};

enum class StopReason { all_under_delta, outlier_std_rule, max_epochs };

std::string_view to_string(StopReason r) noexcept;
std::optional<StopReason> parse_stop_reason(std::string_view s) noexcept;
std::string_view to_string(VisitNormalizer v) noexcept;
std::optional<VisitNormalizer> parse_visit_normalizer(std::string_view s) noexcept;
std::string_view to_string(PerformanceKind k) noexcept;
std::optional<PerformanceKind> parse_performance_kind(std::string_view s) noexcept;

struct DominoState {
  SampleBank bank;
  DominoConfig config;
  Eigen::VectorXd weights;
  std::size_t epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
};

struct DominoModel {
  SampleBank bank;
  DominoConfig config;
  Eigen::VectorXd final_weights;
  std::vector<EpochRecord> history;
  StopReason stop_reason = StopReason::max_epochs;
};

// Uniform weights; InvalidArgument when the bank has fewer than 2 paths.
DominoState init_domino(const SampleBank& bank, const DominoConfig& config);

// softmax(lambda * weights), max-subtracted.
Eigen::VectorXd draw_probabilities(const Eigen::VectorXd& weights, double lambda);

// Inverse-CDF draw scanning indices in ascending order.
std::size_t draw_categorical(const Eigen::VectorXd& probabilities, Rng& rng);

// One walk over the whole grid, every point drawn independently from
// `probabilities`. Accepts single-path banks.
Walk random_walk(const SampleBank& bank, const Eigen::VectorXd& probabilities, Rng& rng);
Walk run_walk_epoch(const DominoState& state, Rng& rng);

struct Performance {
  Eigen::VectorXd per_path;  // M^w
  double mean = 0.0;         // m^w
};

// M_i = 1 / (1 + median |f_i - walk|).
Performance evaluate_performance(const Eigen::VectorXd& walk_values, const SampleBank& bank,
                                 PerformanceKind kind = PerformanceKind::inverse_mae);

std::vector<std::size_t> visit_counts(const std::vector<std::size_t>& indices, std::size_t path_count);

// p_i ∝ prod_{a < w} exp(1/2 - |i in z_a| / norm) * M_i, normalised.
// `prior_walks` holds the indices of every completed earlier epoch.
Eigen::VectorXd update_weights(const std::vector<std::vector<std::size_t>>& prior_walks,
                               const Eigen::VectorXd& performances, std::size_t walk_length,
                               VisitNormalizer normalizer);

struct DivergenceProfile {
  Eigen::MatrixXd deviation;  // |walk(t_n) - f_i(t_n)|, paths x points
  Eigen::MatrixXd kl;         // deviation^2 / (2 sigma^2); diagnostics only
  double threshold = 0.0;     // delta_fraction * value range
  bool degenerate_range = false;
};

DivergenceProfile divergence_profile(const Eigen::VectorXd& walk_values, const SampleBank& bank,
                                     const DominoConfig& config);

struct StopDecision {
  bool stop = false;
  std::optional<StopReason> reason;
};

// Evaluated on the latest epoch. Requires at least one completed epoch.
StopDecision check_stop(const DominoState& state);
StopDecision check_stop(const DivergenceProfile& profile, std::size_t epoch, const DominoConfig& config);

// One epoch: walk, score, reweight, record. Returns the stop decision.
StopDecision step_epoch(DominoState& state, Rng& rng);

DominoModel train_domino(const SampleBank& bank, const DominoConfig& config, std::uint64_t seed);

// Echoes `observed` over its M points and fills points M..N-1 from walks
// drawn with draw_probabilities(final_weights, lambda). `walks` overrides
// config.forecast_walks when non-zero. Observed must be the first M points
// of the bank grid.
Eigen::VectorXd forecast(const DominoModel& model, const TimeSeries& observed, std::uint64_t seed,
                         std::size_t walks = 0);

std::uint64_t bank_hash(const SampleBank& bank);

void save_bank(std::ostream& out, const SampleBank& bank);
SampleBank load_bank(std::istream& in);

// The model file references its bank by content hash; load_model checks it.
void save_model(std::ostream& out, const DominoModel& model);
DominoModel load_model(std::istream& in, const SampleBank& bank);

}  // namespace domino::walk

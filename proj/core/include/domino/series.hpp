#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace domino::series {

// Regular time grid: point(k) = start + k * step.
class TimeGrid {
 public:
  // Validated factory: step > 0 and n >= 2, else InvalidArgument.
  static TimeGrid make(double start, double step, std::size_t n);

  double start() const noexcept { return start_; }
  double step() const noexcept { return step_; }
  std::size_t size() const noexcept { return n_; }
  double point(std::size_t k) const noexcept { return start_ + static_cast<double>(k) * step_; }
  double last() const noexcept { return point(n_ - 1); }
  double span() const noexcept { return last() - start_; }
  Eigen::VectorXd points() const;

  // Contiguous sub-grid [offset, offset + count). count may be 1, which
  // make() rejects; prefixes and suffixes of a grid are still grids.
  TimeGrid slice(std::size_t offset, std::size_t count) const;

  // Index of t on this grid if t is (within 1e-9 * step) a grid point.
  std::ptrdiff_t index_of(double t) const noexcept;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  TimeGrid(double start, double step, std::size_t n) : start_(start), step_(step), n_(n) {}

  double start_ = 0.0;
  double step_ = 1.0;
  std::size_t n_ = 2;
};

struct TimeSeries {
  TimeSeries(std::int64_t id, TimeGrid grid, Eigen::VectorXd values);

  std::int64_t id;
  TimeGrid grid;
  Eigen::VectorXd values;

  std::size_t size() const noexcept { return grid.size(); }
};

// I >= 2 series on one shared grid.
class Dataset {
 public:
  explicit Dataset(std::vector<TimeSeries> series);

  const std::vector<TimeSeries>& series() const noexcept { return series_; }
  const TimeSeries& operator[](std::size_t i) const { return series_[i]; }
  std::size_t count() const noexcept { return series_.size(); }
  const TimeGrid& grid() const noexcept { return series_.front().grid; }

  // Index of the series carrying `id`, or -1.
  std::ptrdiff_t find(std::int64_t id) const noexcept;

 private:
  std::vector<TimeSeries> series_;
};

struct PeriodicComponent {
  double amplitude = 1.0;
  double period = 1.0;
  double phase = 0.0;
};

struct SyntheticSpec {
  double trend_slope = 0.05;
  double trend_intercept = 20.0;
  std::vector<PeriodicComponent> periodic_components{{10.0, 24.0, 0.0}, {3.0, 12.0, 0.5}};
  double noise_std = 2.0;
  // Per-individual perturbation: amplitude scaled by (1 + u * amplitude_jitter)
  // and phase shifted by u' * phase_jitter, with u, u' ~ U(-1, 1).
  double amplitude_jitter = 0.1;
  double phase_jitter = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

TimeGrid make_grid(double start, double step, std::size_t n);

Dataset generate_synthetic(const SyntheticSpec& spec, const TimeGrid& grid, std::size_t count);

struct HoldoutSplit {
  Dataset train;
  TimeSeries holdout;
};

// `hold` is a position in the dataset (0-based), not a series id.
HoldoutSplit split_holdout(const Dataset& dataset, std::size_t hold);

struct QuerySplit {
  TimeSeries observed;
  TimeSeries target;
};

QuerySplit split_query(const TimeSeries& series, std::size_t m);

// CSV with header `series_id,t,y`, rows sorted by (series_id, t).
void write_dataset_csv(std::ostream& out, const Dataset& dataset);
Dataset read_dataset_csv(std::istream& in);

struct Points {
  std::vector<double> t;
  std::vector<double> y;
};

// Raw (t, y) rows of one series. Accepts `t,y` or `series_id,t,y` headers;
// the latter must carry a single id. Grid alignment is left to the caller.
Points read_points_csv(std::istream& in);

}  // namespace domino::series

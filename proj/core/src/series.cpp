#include "domino/series.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "domino/detail/text.hpp"
#include "domino/errors.hpp"
#include "domino/random.hpp"

namespace domino::series {

TimeGrid TimeGrid::make(double start, double step, std::size_t n) {
  if (!std::isfinite(start) || !std::isfinite(step) || !(step > 0.0))
    throw InvalidArgument("time grid step must be a positive finite number");
  if (n < 2) throw InvalidArgument("time grid needs at least 2 points");
  return TimeGrid(start, step, n);
}

Eigen::VectorXd TimeGrid::points() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n_));
  for (std::size_t k = 0; k < n_; ++k) out[static_cast<Eigen::Index>(k)] = point(k);
  return out;
}

TimeGrid TimeGrid::slice(std::size_t offset, std::size_t count) const {
  if (count == 0 || offset + count > n_) throw InvalidArgument("grid slice out of range");
  return TimeGrid(point(offset), step_, count);
}

std::ptrdiff_t TimeGrid::index_of(double t) const noexcept {
  const double k = std::round((t - start_) / step_);
  if (k < 0.0 || k >= static_cast<double>(n_)) return -1;
  const auto idx = static_cast<std::size_t>(k);
  if (std::abs(point(idx) - t) > 1e-9 * step_) return -1;
  return static_cast<std::ptrdiff_t>(idx);
}

TimeSeries::TimeSeries(std::int64_t id_, TimeGrid grid_, Eigen::VectorXd values_)
    : id(id_), grid(grid_), values(std::move(values_)) {
  if (static_cast<std::size_t>(values.size()) != grid.size())
    throw InvalidArgument("series " + std::to_string(id) + ": value count " +
                          std::to_string(values.size()) + " != grid size " +
                          std::to_string(grid.size()));
  if (!values.allFinite())
    throw InvalidArgument("series " + std::to_string(id) + " contains non-finite values");
}

Dataset::Dataset(std::vector<TimeSeries> series) : series_(std::move(series)) {
  if (series_.size() < 2) throw InvalidArgument("a dataset needs at least 2 series");
  for (const auto& s : series_)
    if (!(s.grid == series_.front().grid))
      throw InvalidArgument("series " + std::to_string(s.id) + " is not on the shared grid");
}

std::ptrdiff_t Dataset::find(std::int64_t id) const noexcept {
  for (std::size_t i = 0; i < series_.size(); ++i)
    if (series_[i].id == id) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

void SyntheticSpec::validate() const {
  if (!(noise_std >= 0.0)) throw InvalidArgument("noise_std must be >= 0");
  if (!(amplitude_jitter >= 0.0) || !(phase_jitter >= 0.0))
    throw InvalidArgument("jitter magnitudes must be >= 0");
  for (const auto& c : periodic_components)
    if (!(c.period > 0.0)) throw InvalidArgument("periodic component period must be > 0");
}

TimeGrid make_grid(double start, double step, std::size_t n) { return TimeGrid::make(start, step, n); }

Dataset generate_synthetic(const SyntheticSpec& spec, const TimeGrid& grid, std::size_t count) {
  spec.validate();
  if (count < 2) throw InvalidArgument("generate_synthetic needs count >= 2");

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(grid.size());

  std::vector<TimeSeries> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<PeriodicComponent> comps = spec.periodic_components;
    for (auto& c : comps) {
      c.amplitude *= 1.0 + spec.amplitude_jitter * unit(rng);
      c.phase += spec.phase_jitter * unit(rng);
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = grid.point(static_cast<std::size_t>(k));
      double v = spec.trend_intercept + spec.trend_slope * t;
      for (const auto& c : comps)
        v += c.amplitude * std::sin(2.0 * std::numbers::pi * t / c.period + c.phase);
      y[k] = v;
    }
    // Noise is drawn after the jitters so the zero-noise path is unaffected
    // by whether noise_std is zero.
    if (spec.noise_std > 0.0)
      for (Eigen::Index k = 0; k < n; ++k) y[k] += spec.noise_std * noise(rng);
    out.emplace_back(static_cast<std::int64_t>(i), grid, std::move(y));
  }
  return Dataset(std::move(out));
}

HoldoutSplit split_holdout(const Dataset& dataset, std::size_t hold) {
  if (hold >= dataset.count()) throw InvalidArgument("holdout index out of range");
  if (dataset.count() < 3) throw InvalidArgument("holdout split needs at least 3 series");
  std::vector<TimeSeries> train;
  train.reserve(dataset.count() - 1);
  for (std::size_t i = 0; i < dataset.count(); ++i)
    if (i != hold) train.push_back(dataset[i]);
  return {Dataset(std::move(train)), dataset[hold]};
}

QuerySplit split_query(const TimeSeries& series, std::size_t m) {
  const std::size_t n = series.size();
  if (m < 1 || m >= n) throw InvalidArgument("query split needs 1 <= m < N");
  const auto mi = static_cast<Eigen::Index>(m);
  const auto rest = static_cast<Eigen::Index>(n - m);
  return {TimeSeries(series.id, series.grid.slice(0, m), series.values.head(mi)),
          TimeSeries(series.id, series.grid.slice(m, n - m), series.values.tail(rest))};
}

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  std::vector<const TimeSeries*> order;
  for (const auto& s : dataset.series()) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const TimeSeries* a, const TimeSeries* b) { return a->id < b->id; });
  out << "series_id,t,y\n";
  for (const TimeSeries* s : order)
    for (std::size_t k = 0; k < s->size(); ++k)
      out << s->id << ',' << detail::format_double(s->grid.point(k)) << ','
          << detail::format_double(s->values[static_cast<Eigen::Index>(k)]) << '\n';
  if (!out) throw IoError("failed writing dataset CSV");
}

namespace {

struct Row {
  std::int64_t id;
  double t;
  double y;
  std::size_t line;
};

std::vector<std::string_view> header_fields(const std::string& header) {
  std::vector<std::string_view> fields = detail::split(header, ',');
  for (auto& f : fields) f = detail::trim(f);
  return fields;
}

// Rebuilds a regular grid from strictly increasing sample times.
TimeGrid grid_from_times(const std::vector<double>& t, std::size_t line_hint) {
  if (t.size() < 2) throw ParseError("a series needs at least 2 rows", line_hint);
  const double step = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(step > 0.0)) throw ParseError("time values must be strictly increasing", line_hint);
  TimeGrid grid = TimeGrid::make(t.front(), step, t.size());
  for (std::size_t k = 0; k < t.size(); ++k)
    if (std::abs(grid.point(k) - t[k]) > 1e-6 * step)
      throw ParseError("time values are not on a regular grid", line_hint);
  return grid;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input, expected header series_id,t,y", 1);
  const auto header = header_fields(line);
  if (header.size() != 3 || header[0] != "series_id" || header[1] != "t" || header[2] != "y")
    throw ParseError("expected header series_id,t,y", 1);

  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
    const auto id = detail::parse_int(f[0]);
    const auto t = detail::parse_double(f[1]);
    const auto y = detail::parse_double(f[2]);
    if (!id) throw ParseError("bad series_id", lineno);
    if (!t) throw ParseError("bad t value", lineno);
    if (!y) throw ParseError("bad y value", lineno);
    if (!rows.empty()) {
      const Row& prev = rows.back();
      if (*id < prev.id || (*id == prev.id && !(*t > prev.t)))
        throw ParseError("rows must be sorted by (series_id, t)", lineno);
    }
    rows.push_back({*id, *t, *y, lineno});
  }
  if (rows.empty()) throw ParseError("no data rows", lineno);

  std::map<std::int64_t, std::vector<const Row*>> by_id;
  for (const auto& r : rows) by_id[r.id].push_back(&r);

  std::vector<TimeSeries> series;
  for (const auto& [id, rs] : by_id) {
    std::vector<double> t;
    Eigen::VectorXd y(static_cast<Eigen::Index>(rs.size()));
    for (std::size_t k = 0; k < rs.size(); ++k) {
      t.push_back(rs[k]->t);
      y[static_cast<Eigen::Index>(k)] = rs[k]->y;
    }
    TimeGrid grid = grid_from_times(t, rs.front()->line);
    if (!series.empty() && !(grid == series.front().grid)) {
      // Recomputed steps can differ in the last bit; accept near-equal grids.
      const TimeGrid& ref = series.front().grid;
      bool same = ref.size() == grid.size() && std::abs(ref.start() - grid.start()) <= 1e-9 * ref.step() &&
                  std::abs(ref.step() - grid.step()) <= 1e-9 * ref.step();
      if (!same) throw ParseError("series " + std::to_string(id) + " is on a different grid", rs.front()->line);
      grid = ref;
    }
    series.emplace_back(id, grid, std::move(y));
  }
  if (series.size() < 2) throw ParseError("a dataset needs at least 2 series", 0);
  return Dataset(std::move(series));
}

Points read_points_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input, expected header t,y", 1);
  const auto header = header_fields(line);
  bool with_id = false;
  if (header.size() == 3 && header[0] == "series_id" && header[1] == "t" && header[2] == "y") {
    with_id = true;
  } else if (!(header.size() == 2 && header[0] == "t" && header[1] == "y")) {
    throw ParseError("expected header t,y or series_id,t,y", 1);
  }

  Points out;
  std::optional<long long> seen_id;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != (with_id ? 3u : 2u)) throw ParseError("wrong field count", lineno);
    std::size_t base = 0;
    if (with_id) {
      const auto id = detail::parse_int(f[0]);
      if (!id) throw ParseError("bad series_id", lineno);
      if (seen_id && *seen_id != *id) throw ParseError("expected a single series", lineno);
      seen_id = id;
      base = 1;
    }
    const auto t = detail::parse_double(f[base]);
    const auto y = detail::parse_double(f[base + 1]);
    if (!t) throw ParseError("bad t value", lineno);
    if (!y) throw ParseError("bad y value", lineno);
    if (!out.t.empty() && !(*t > out.t.back())) throw ParseError("t must be strictly increasing", lineno);
    out.t.push_back(*t);
    out.y.push_back(*y);
  }
  if (out.t.empty()) throw ParseError("no data rows", lineno);
  return out;
}

}  // namespace domino::series

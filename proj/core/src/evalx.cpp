#include "domino/evalx.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "domino/detail/text.hpp"
#include "domino/detail/fpenv.hpp"
#include "domino/errors.hpp"
#include "domino/random.hpp"

namespace domino::evalx {

double median(Eigen::VectorXd v) {
  const Eigen::Index n = v.size();
  if (n == 0) throw InvalidArgument("median of an empty vector");
  double* data = v.data();
  const Eigen::Index mid = n / 2;
  std::nth_element(data, data + mid, data + n);
  const double upper = data[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(data, data + mid);
  return (lower + upper) / 2.0;
}

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw InvalidArgument("mae: length mismatch");
  if (y.size() == 0) throw InvalidArgument("mae: empty input");
  return median((y - yhat).cwiseAbs());
}

void StudyConfig::validate() const {
  if (runs < 1) throw InvalidArgument("study runs must be >= 1");
  if (lengths.empty()) throw InvalidArgument("study needs at least one length");
  for (std::size_t n : lengths)
    if (n < 4) throw InvalidArgument("study lengths must be >= 4");
  if (ablation_length < 4) throw InvalidArgument("ablation_length must be >= 4");
  if (!(prefix_fraction > 0.0 && prefix_fraction < 1.0)) throw InvalidArgument("prefix_fraction must be in (0, 1)");
  if (series_count < 3) throw InvalidArgument("studies need series_count >= 3");
  if (!(grid_step > 0.0)) throw InvalidArgument("grid_step must be > 0");
  synthetic.validate();
  em.validate();
  domino.validate();
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t run, std::size_t length, std::size_t fold) noexcept {
  return derive_seed(base, {run, length, fold});
}

namespace {
constexpr std::uint64_t kDatasetSalt = 0xda7a5e7ULL;
constexpr std::uint64_t kHoldoutSalt = 0x401d07ULL;
}  // namespace

std::uint64_t dataset_seed(std::uint64_t base, std::size_t run, std::size_t length) noexcept {
  return derive_seed(base, {run, length, kDatasetSalt});
}

std::size_t holdout_index(const StudyConfig& config, std::size_t run, std::size_t length) noexcept {
  return static_cast<std::size_t>(derive_seed(config.seed, {run, length, kHoldoutSalt}) % config.series_count);
}

std::size_t prefix_length(double prefix_fraction, std::size_t n) {
  const auto m = static_cast<std::size_t>(std::floor(prefix_fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(m, 1, n - 1);
}

const StudyRow* StudyResult::find(std::size_t length, std::string_view method, std::string_view setting) const {
  for (const auto& r : rows)
    if (r.length == length && r.method == method && r.setting == setting) return &r;
  return nullptr;
}

StudyResult aggregate(std::vector<RunScore> scores) {
  struct Key {
    std::size_t length;
    std::size_t setting_order;
    std::size_t method_order;
    auto operator<=>(const Key&) const = default;
  };
  std::vector<std::string> settings, methods;
  auto order_of = [](std::vector<std::string>& seen, const std::string& s) {
    auto it = std::find(seen.begin(), seen.end(), s);
    if (it != seen.end()) return static_cast<std::size_t>(it - seen.begin());
    seen.push_back(s);
    return seen.size() - 1;
  };

  // key -> run -> fold MAEs
  std::map<Key, std::map<std::size_t, std::vector<double>>> cells;
  std::map<Key, std::pair<std::string, std::string>> names;
  for (const auto& s : scores) {
    const Key k{s.length, order_of(settings, s.setting), order_of(methods, s.method)};
    cells[k][s.run].push_back(s.mae);
    names[k] = {s.method, s.setting};
  }

  StudyResult res;
  for (auto& [key, by_run] : cells) {
    StudyRow row;
    row.length = key.length;
    row.method = names[key].first;
    row.setting = names[key].second;
    for (auto& [run, folds] : by_run) {
      double sum = 0.0;
      for (double v : folds) sum += v;
      row.maes.push_back(sum / static_cast<double>(folds.size()));
    }
    const double n = static_cast<double>(row.maes.size());
    double mean = 0.0;
    for (double v : row.maes) mean += v;
    mean /= n;
    row.mean_mae = mean;
    if (row.maes.size() > 1) {
      double ss = 0.0;
      for (double v : row.maes) ss += (v - mean) * (v - mean);
      row.std_mae = std::sqrt(ss / (n - 1.0));
    } else {
      row.single_run = true;
    }
    res.rows.push_back(std::move(row));
  }
  std::stable_sort(scores.begin(), scores.end(), [](const RunScore& a, const RunScore& b) {
    return std::tie(a.length, a.run, a.fold) < std::tie(b.length, b.run, b.fold);
  });
  res.scores = std::move(scores);
  return res;
}

walk::SampleBank make_bank(const magma::MagmaModel& model, const series::Dataset& train, std::uint64_t seed) {
  double noise = 0.0;
  for (const auto& k : model.individual_kernels) noise += k.noise_var;
  noise /= static_cast<double>(model.individual_kernels.size());
  return walk::SampleBank(train.grid(), magma::draw_individual_paths(model, train, seed), std::sqrt(noise));
}

namespace {

struct DominoVariant {
  std::string method;
  std::string setting;
  walk::DominoConfig config;
};

struct Cell {
  std::size_t run;
  std::size_t length;
  std::size_t fold;
  bool with_magma;
  std::vector<DominoVariant> variants;
};

// Fits MAGMA on all series but the held-out one, forecasts its suffix with
// both methods and scores each against the truth.
std::vector<RunScore> evaluate_cell(const StudyConfig& config, const Cell& cell) {
  const detail::ScopedFlushDenormals ftz;
  const std::size_t n = cell.length;
  const series::TimeGrid grid = series::make_grid(config.grid_start, config.grid_step, n);
  series::SyntheticSpec spec = config.synthetic;
  spec.seed = dataset_seed(config.seed, cell.run, n);
  const series::Dataset data = series::generate_synthetic(spec, grid, config.series_count);
  const std::uint64_t seed = cell_seed(config.seed, cell.run, n, cell.fold);

  const series::HoldoutSplit split = series::split_holdout(data, cell.fold);
  const magma::MagmaModel model = magma::fit_magma(split.train, config.em);

  const walk::SampleBank bank = make_bank(model, split.train, derive_seed(seed, {1}));

  const std::size_t m = prefix_length(config.prefix_fraction, n);
  const series::QuerySplit q = series::split_query(split.holdout, m);
  const auto tail = static_cast<Eigen::Index>(n - m);

  std::vector<RunScore> out;
  if (cell.with_magma) {
    const gp::GpPosterior pred = magma::predict_magma(model, q.observed, grid, config.predict_optimizer);
    out.push_back({n, "magma", "", cell.run, cell.fold, mae(q.target.values, pred.mean.tail(tail))});
  }
  for (const auto& v : cell.variants) {
    const walk::DominoModel dm = walk::train_domino(bank, v.config, derive_seed(seed, {2}));
    const Eigen::VectorXd fc = walk::forecast(dm, q.observed, derive_seed(seed, {3}));
    out.push_back({n, v.method, v.setting, cell.run, cell.fold, mae(q.target.values, fc.tail(tail))});
  }
  return out;
}

std::vector<RunScore> run_cells(const StudyConfig& config, const std::vector<Cell>& cells) {
  std::vector<std::vector<RunScore>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      try {
        results[i] = evaluate_cell(config, c);
      } catch (const NumericalFailure& e) {
        errors[i] = std::make_exception_ptr(NumericalFailure(
            "length " + std::to_string(c.length) + " run " + std::to_string(c.run) + " fold " +
                std::to_string(c.fold) + ": " + e.what(),
            e.attempted_jitter()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<RunScore> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  return all;
}

}  // namespace

StudyResult run_length_study(const StudyConfig& config) {
  config.validate();
  std::vector<Cell> cells;
  for (std::size_t n : config.lengths)
    for (std::size_t r = 0; r < config.runs; ++r)
      cells.push_back({r, n, holdout_index(config, r, n), true, {{"domino", "", config.domino}}});
  return aggregate(run_cells(config, cells));
}

StudyResult run_cv_study(const StudyConfig& config) {
  config.validate();
  std::vector<Cell> cells;
  for (std::size_t n : config.lengths)
    for (std::size_t r = 0; r < config.runs; ++r)
      for (std::size_t k = 0; k < config.series_count; ++k)
        cells.push_back({r, n, k, true, {{"domino", "", config.domino}}});
  return aggregate(run_cells(config, cells));
}

std::string_view to_string(Hyperparameter hp) noexcept {
  switch (hp) {
    case Hyperparameter::max_epochs: return "max_epochs";
    case Hyperparameter::delta: return "delta";
    case Hyperparameter::outlier_fraction: return "outlier_fraction";
    case Hyperparameter::lambda: return "lambda";
  }
  return "lambda";
}

std::optional<Hyperparameter> parse_hyperparameter(std::string_view s) noexcept {
  if (s == "max_epochs") return Hyperparameter::max_epochs;
  if (s == "delta") return Hyperparameter::delta;
  if (s == "outlier_fraction") return Hyperparameter::outlier_fraction;
  if (s == "lambda") return Hyperparameter::lambda;
  return std::nullopt;
}

std::vector<double> default_grid(Hyperparameter hp) {
  switch (hp) {
    case Hyperparameter::max_epochs: return {5, 10, 15, 20, 25, 30};
    case Hyperparameter::delta: return {0.01, 0.02, 0.03, 0.05, 0.10};
    case Hyperparameter::outlier_fraction: return {0.01, 0.02, 0.03, 0.05, 0.10};
    case Hyperparameter::lambda: return {0.5, 1.0, 1.5};
  }
  return {};
}

walk::DominoConfig default_domino_config() { return walk::DominoConfig{}; }

walk::DominoConfig with_hyperparameter(walk::DominoConfig base, Hyperparameter hp, double value) {
  switch (hp) {
    case Hyperparameter::max_epochs:
      if (!(value >= 1.0) || value != std::floor(value))
        throw InvalidArgument("max_epochs ablation values must be positive integers");
      base.max_epochs = static_cast<std::size_t>(value);
      break;
    case Hyperparameter::delta: base.delta_fraction = value; break;
    case Hyperparameter::outlier_fraction: base.outlier_fraction = value; break;
    case Hyperparameter::lambda: base.lambda = value; break;
  }
  base.validate();
  return base;
}

std::string setting_label(Hyperparameter hp, double value) {
  return std::string(to_string(hp)) + "=" + detail::format_double(value);
}

StudyResult run_ablation(Hyperparameter hp, const std::vector<double>& values, const StudyConfig& config) {
  config.validate();
  if (values.empty()) throw InvalidArgument("ablation needs at least one value");

  // Everything except the swept hyperparameter stays at the defaults; the
  // forecast aggregation setting is taken from the study config.
  walk::DominoConfig base = default_domino_config();
  base.forecast_walks = config.domino.forecast_walks;
  base.visit_normalizer = config.domino.visit_normalizer;

  auto variants_for = [&](const std::string& method) {
    std::vector<DominoVariant> vs;
    for (double v : values) vs.push_back({method, setting_label(hp, v), with_hyperparameter(base, hp, v)});
    return vs;
  };

  const std::size_t n = config.ablation_length;
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < config.runs; ++r) {
    const std::size_t hold = holdout_index(config, r, n);
    cells.push_back({r, n, hold, false, variants_for("domino")});
    if (config.ablation_cv)
      for (std::size_t k = 0; k < config.series_count; ++k) cells.push_back({r, n, k, false, variants_for("domino_cv")});
  }
  return aggregate(run_cells(config, cells));
}

namespace {

std::string method_column(const std::string& method, const std::string& setting) {
  return setting.empty() ? method : method + "[" + setting + "]";
}

}  // namespace

void write_scores_csv(std::ostream& out, const StudyResult& result) {
  out << "length,method,run,fold,mae\n";
  for (const auto& s : result.scores)
    out << s.length << ',' << method_column(s.method, s.setting) << ',' << s.run << ',' << s.fold << ','
        << detail::format_double(s.mae) << '\n';
}

void write_summary_csv(std::ostream& out, const StudyResult& result) {
  out << "length,method,mean_mae,std_mae\n";
  for (const auto& r : result.rows)
    out << r.length << ',' << method_column(r.method, r.setting) << ',' << detail::format_double(r.mean_mae) << ','
        << detail::format_double(r.std_mae) << '\n';
}

void write_markdown(std::ostream& out, const StudyResult& result, std::string_view title) {
  std::vector<std::string> methods;
  std::vector<std::pair<std::size_t, std::string>> keys;
  bool by_setting = false;
  for (const auto& r : result.rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    const std::pair<std::size_t, std::string> k{r.length, r.setting};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    by_setting = by_setting || !r.setting.empty();
  }

  if (!title.empty()) out << "### " << title << "\n\n";
  out << (by_setting ? "| Setting |" : "| Length N |");
  for (const auto& m : methods) out << ' ' << m << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < methods.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& [length, setting] : keys) {
    out << "| " << (by_setting ? setting : std::to_string(length)) << " |";
    for (const auto& m : methods) {
      const StudyRow* row = result.find(length, m, setting);
      if (!row) {
        out << " - |";
        continue;
      }
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << row->mean_mae << " (" << row->std_mae << ")";
      out << ' ' << cell.str() << " |";
    }
    out << '\n';
  }
}

}  // namespace domino::evalx

#include "domino/walk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "domino/detail/text.hpp"
#include "domino/errors.hpp"
#include "domino/metrics.hpp"

namespace domino::walk {

SampleBank::SampleBank(TimeGrid grid, std::vector<Eigen::VectorXd> paths, double source_noise_std)
    : grid_(grid), paths_(std::move(paths)), source_noise_std_(source_noise_std) {
  if (paths_.empty()) throw InvalidArgument("sample bank needs at least one path");
  if (!(source_noise_std_ >= 0.0) || !std::isfinite(source_noise_std_))
    throw InvalidArgument("sample bank noise std must be >= 0");
  min_ = std::numeric_limits<double>::infinity();
  max_ = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths_) {
    if (static_cast<std::size_t>(p.size()) != grid_.size())
      throw InvalidArgument("sample bank path length does not match the grid");
    if (!p.allFinite()) throw InvalidArgument("sample bank path contains non-finite values");
    min_ = std::min(min_, p.minCoeff());
    max_ = std::max(max_, p.maxCoeff());
  }
}

void DominoConfig::validate() const {
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (!(delta_fraction > 0.0 && delta_fraction < 1.0)) throw InvalidArgument("delta_fraction must be in (0, 1)");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
    throw InvalidArgument("outlier_fraction must be in [0, 1)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  if (forecast_walks < 1) throw InvalidArgument("forecast_walks must be >= 1");
}

std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::all_under_delta: return "all_under_delta";
    case StopReason::outlier_std_rule: return "outlier_std_rule";
    case StopReason::max_epochs: return "max_epochs";
  }
  return "max_epochs";
}

std::optional<StopReason> parse_stop_reason(std::string_view s) noexcept {
  if (s == "all_under_delta") return StopReason::all_under_delta;
  if (s == "outlier_std_rule") return StopReason::outlier_std_rule;
  if (s == "max_epochs") return StopReason::max_epochs;
  return std::nullopt;
}

std::string_view to_string(VisitNormalizer v) noexcept {
  return v == VisitNormalizer::walk_length ? "walk_length" : "series_count";
}

std::optional<VisitNormalizer> parse_visit_normalizer(std::string_view s) noexcept {
  if (s == "walk_length") return VisitNormalizer::walk_length;
  if (s == "series_count") return VisitNormalizer::series_count;
  return std::nullopt;
}

std::string_view to_string(PerformanceKind) noexcept { return "inverse_mae"; }

std::optional<PerformanceKind> parse_performance_kind(std::string_view s) noexcept {
  if (s == "inverse_mae") return PerformanceKind::inverse_mae;
  return std::nullopt;
}

DominoState init_domino(const SampleBank& bank, const DominoConfig& config) {
  config.validate();
  if (bank.count() < 2) throw InvalidArgument("DOMINO needs at least 2 sample paths");
  const auto i = static_cast<Eigen::Index>(bank.count());
  return DominoState{bank, config, Eigen::VectorXd::Constant(i, 1.0 / static_cast<double>(i)), 0, {}};
}

Eigen::VectorXd draw_probabilities(const Eigen::VectorXd& weights, double lambda) {
  if (weights.size() == 0) throw InvalidArgument("draw_probabilities: empty weights");
  Eigen::VectorXd q = (lambda * (weights.array() - weights.maxCoeff())).exp().matrix();
  q /= q.sum();
  return q;
}

std::size_t draw_categorical(const Eigen::VectorXd& probabilities, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * probabilities.sum();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > 0.0) last_positive = static_cast<std::size_t>(i);
    cum += probabilities[i];
    if (u < cum) return static_cast<std::size_t>(i);
  }
  return last_positive;
}

Walk random_walk(const SampleBank& bank, const Eigen::VectorXd& probabilities, Rng& rng) {
  if (static_cast<std::size_t>(probabilities.size()) != bank.count())
    throw InvalidArgument("random_walk: probability vector does not match the bank");
  const std::size_t n = bank.length();
  Walk w{Eigen::VectorXd(static_cast<Eigen::Index>(n)), std::vector<std::size_t>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = draw_categorical(probabilities, rng);
    w.indices[k] = i;
    w.values[static_cast<Eigen::Index>(k)] = bank.path(i)[static_cast<Eigen::Index>(k)];
  }
  return w;
}

Walk run_walk_epoch(const DominoState& state, Rng& rng) {
  return random_walk(state.bank, draw_probabilities(state.weights, state.config.lambda), rng);
}

Performance evaluate_performance(const Eigen::VectorXd& walk_values, const SampleBank& bank, PerformanceKind) {
  if (static_cast<std::size_t>(walk_values.size()) != bank.length())
    throw InvalidArgument("evaluate_performance: walk length does not match the bank");
  Performance p{Eigen::VectorXd(static_cast<Eigen::Index>(bank.count())), 0.0};
  for (std::size_t i = 0; i < bank.count(); ++i)
    p.per_path[static_cast<Eigen::Index>(i)] = 1.0 / (1.0 + evalx::mae(bank.path(i), walk_values));
  p.mean = p.per_path.sum() / static_cast<double>(bank.count());
  return p;
}

std::vector<std::size_t> visit_counts(const std::vector<std::size_t>& indices, std::size_t path_count) {
  std::vector<std::size_t> counts(path_count, 0);
  for (std::size_t i : indices) {
    if (i >= path_count) throw InvalidArgument("visit index out of range");
    ++counts[i];
  }
  return counts;
}

Eigen::VectorXd update_weights(const std::vector<std::vector<std::size_t>>& prior_walks,
                               const Eigen::VectorXd& performances, std::size_t walk_length,
                               VisitNormalizer normalizer) {
  const auto count = static_cast<std::size_t>(performances.size());
  if (count == 0) throw InvalidArgument("update_weights: empty performances");
  if (!performances.allFinite() || (performances.array() < 0.0).any())
    throw InvalidArgument("update_weights: performances must be finite and non-negative");
  const double norm = normalizer == VisitNormalizer::walk_length ? static_cast<double>(walk_length)
                                                                 : static_cast<double>(count);

  // Accumulate in log space; the product of many exp() factors overflows.
  Eigen::VectorXd log_w = performances.array().log().matrix();
  for (const auto& z : prior_walks) {
    const auto visits = visit_counts(z, count);
    for (std::size_t i = 0; i < count; ++i)
      log_w[static_cast<Eigen::Index>(i)] += 0.5 - static_cast<double>(visits[i]) / norm;
  }
  const double top = log_w.maxCoeff();
  if (!std::isfinite(top)) throw DegenerateWeights("all unnormalized weights are zero");
  Eigen::VectorXd w = (log_w.array() - top).exp().matrix();
  w /= w.sum();
  return w;
}

DivergenceProfile divergence_profile(const Eigen::VectorXd& walk_values, const SampleBank& bank,
                                     const DominoConfig& config) {
  const auto n = static_cast<Eigen::Index>(bank.length());
  if (walk_values.size() != n) throw InvalidArgument("divergence_profile: walk length does not match the bank");
  DivergenceProfile p;
  p.deviation.resize(static_cast<Eigen::Index>(bank.count()), n);
  for (std::size_t i = 0; i < bank.count(); ++i)
    p.deviation.row(static_cast<Eigen::Index>(i)) = (walk_values - bank.path(i)).cwiseAbs().transpose();
  const double sigma2 = bank.source_noise_std() * bank.source_noise_std();
  p.kl = sigma2 > 0.0 ? Eigen::MatrixXd(p.deviation.array().square() / (2.0 * sigma2))
                      : Eigen::MatrixXd(p.deviation.unaryExpr([](double d) {
                          return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
                        }));
  p.degenerate_range = !(bank.range() > 0.0);
  p.threshold = p.degenerate_range ? 0.0 : config.delta_fraction * bank.range();
  return p;
}

namespace {

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

StopDecision check_stop(const DivergenceProfile& profile, std::size_t epoch, const DominoConfig& config) {
  const double tau = profile.threshold;
  if (profile.deviation.size() > 0 && profile.deviation.maxCoeff() <= tau)
    return {true, StopReason::all_under_delta};

  std::vector<double> excess, slack;
  for (Eigen::Index c = 0; c < profile.deviation.cols(); ++c)
    for (Eigen::Index r = 0; r < profile.deviation.rows(); ++r) {
      const double d = profile.deviation(r, c);
      if (d > tau)
        excess.push_back(d - tau);
      else
        slack.push_back(tau - d);
    }
  const double budget = config.outlier_fraction * static_cast<double>(profile.deviation.size());
  if (!excess.empty() && !slack.empty() && static_cast<double>(excess.size()) <= budget &&
      population_std(excess) < population_std(slack))
    return {true, StopReason::outlier_std_rule};

  if (epoch >= config.max_epochs) return {true, StopReason::max_epochs};
  return {false, std::nullopt};
}

StopDecision check_stop(const DominoState& state) {
  if (state.history.empty()) throw InvalidArgument("check_stop needs at least one completed epoch");
  const DivergenceProfile p = divergence_profile(state.history.back().walk_values, state.bank, state.config);
  return check_stop(p, state.epoch, state.config);
}

StopDecision step_epoch(DominoState& state, Rng& rng) {
  Walk w = run_walk_epoch(state, rng);
  Performance perf = evaluate_performance(w.values, state.bank, state.config.performance_kind);

  std::vector<std::vector<std::size_t>> prior;
  prior.reserve(state.history.size());
  for (const auto& rec : state.history) prior.push_back(rec.walk_indices);
  Eigen::VectorXd weights =
      update_weights(prior, perf.per_path, state.bank.length(), state.config.visit_normalizer);

  ++state.epoch;
  state.weights = weights;
  state.history.push_back(EpochRecord{state.epoch, std::move(w.values), std::move(w.indices),
                                      std::move(perf.per_path), perf.mean, std::move(weights)});
  return check_stop(state);
}

DominoModel train_domino(const SampleBank& bank, const DominoConfig& config, std::uint64_t seed) {
  DominoState state = init_domino(bank, config);
  Rng rng(seed);
  StopDecision d;
  do {
    d = step_epoch(state, rng);
  } while (!d.stop);
  return DominoModel{std::move(state.bank), state.config, std::move(state.weights), std::move(state.history),
                     *d.reason};
}

Eigen::VectorXd forecast(const DominoModel& model, const TimeSeries& observed, std::uint64_t seed,
                         std::size_t walks) {
  const SampleBank& bank = model.bank;
  const std::size_t n = bank.length();
  const std::size_t m = observed.size();
  if (m < 1 || m >= n) throw InvalidArgument("forecast needs 1 <= M < N observed points");
  const TimeGrid& g = bank.grid();
  for (std::size_t k = 0; k < m; ++k)
    if (g.index_of(observed.grid.point(k)) != static_cast<std::ptrdiff_t>(k))
      throw InvalidArgument("forecast: observed points are not the first M points of the bank grid");
  if (static_cast<std::size_t>(model.final_weights.size()) != bank.count())
    throw InvalidArgument("forecast: weights do not match the bank");

  const std::size_t r_count = walks ? walks : model.config.forecast_walks;
  const Eigen::VectorXd probs = draw_probabilities(model.final_weights, model.config.lambda);
  const std::size_t tail = n - m;
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(tail), static_cast<Eigen::Index>(r_count));
  for (std::size_t r = 0; r < r_count; ++r) {
    Rng rng(derive_seed(seed, {r}));
    for (std::size_t k = 0; k < tail; ++k) {
      const std::size_t i = draw_categorical(probs, rng);
      draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) = bank.path(i)[static_cast<Eigen::Index>(m + k)];
    }
  }

  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  out.head(static_cast<Eigen::Index>(m)) = observed.values;
  for (std::size_t k = 0; k < tail; ++k)
    out[static_cast<Eigen::Index>(m + k)] = evalx::median(draws.row(static_cast<Eigen::Index>(k)).transpose());
  return out;
}

void save_bank(std::ostream& out, const SampleBank& bank) {
  const TimeGrid& g = bank.grid();
  out << "domino-sample-bank 1\n";
  out << "grid " << detail::format_double(g.start()) << ' ' << detail::format_double(g.step()) << ' ' << g.size()
      << '\n';
  out << "source_noise_std " << detail::format_double(bank.source_noise_std()) << '\n';
  out << "paths " << bank.count() << '\n';
  for (const auto& p : bank.paths()) {
    out << "path";
    for (Eigen::Index k = 0; k < p.size(); ++k) out << ' ' << detail::format_double(p[k]);
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("failed writing sample bank");
}

std::uint64_t bank_hash(const SampleBank& bank) {
  std::ostringstream s;
  save_bank(s, bank);
  return detail::fnv1a(s.str());
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

TimeGrid read_grid(detail::TokenReader& in) {
  in.expect("grid");
  const double start = in.number();
  const double step = in.number();
  const std::size_t n = in.count();
  try {
    return TimeGrid::make(start, step, n);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), in.line());
  }
}

Eigen::VectorXd read_vector(detail::TokenReader& in, std::size_t expected) {
  const std::size_t n = in.count();
  if (n != expected) throw ParseError("expected " + std::to_string(expected) + " values", in.line());
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = in.number();
  return v;
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  out << v.size();
  for (Eigen::Index k = 0; k < v.size(); ++k) out << ' ' << detail::format_double(v[k]);
  out << '\n';
}

}  // namespace

SampleBank load_bank(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("domino-sample-bank");
  if (in.integer() != 1) throw ParseError("unsupported sample bank version", in.line());
  const TimeGrid grid = read_grid(in);
  in.expect("source_noise_std");
  const double noise = in.number();
  in.expect("paths");
  const std::size_t count = in.count();
  std::vector<Eigen::VectorXd> paths;
  for (std::size_t i = 0; i < count; ++i) {
    in.expect("path");
    Eigen::VectorXd p(static_cast<Eigen::Index>(grid.size()));
    for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = in.number();
    paths.push_back(std::move(p));
  }
  in.expect("end");
  try {
    return SampleBank(grid, std::move(paths), noise);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), in.line());
  }
}

void save_model(std::ostream& out, const DominoModel& model) {
  const DominoConfig& c = model.config;
  out << "domino-model 1\n";
  out << "bank_hash " << hex64(bank_hash(model.bank)) << '\n';
  out << "config max_epochs " << c.max_epochs << " delta_fraction " << detail::format_double(c.delta_fraction)
      << " outlier_fraction " << detail::format_double(c.outlier_fraction) << " lambda "
      << detail::format_double(c.lambda) << " visit_normalizer " << to_string(c.visit_normalizer)
      << " performance_kind " << to_string(c.performance_kind) << " forecast_walks " << c.forecast_walks << '\n';
  out << "stop_reason " << to_string(model.stop_reason) << '\n';
  out << "final_weights ";
  write_vector(out, model.final_weights);
  out << "epochs " << model.history.size() << '\n';
  for (const auto& rec : model.history) {
    out << "epoch " << rec.epoch << '\n';
    out << "indices " << rec.walk_indices.size();
    for (std::size_t i : rec.walk_indices) out << ' ' << (i + 1);
    out << "\nvalues ";
    write_vector(out, rec.walk_values);
    out << "performances ";
    write_vector(out, rec.performances);
    out << "mean_performance " << detail::format_double(rec.mean_performance) << '\n';
    out << "weights ";
    write_vector(out, rec.weights);
  }
  out << "end\n";
  if (!out) throw IoError("failed writing DOMINO model");
}

DominoModel load_model(std::istream& is, const SampleBank& bank) {
  detail::TokenReader in(is);
  in.expect("domino-model");
  if (in.integer() != 1) throw ParseError("unsupported DOMINO model version", in.line());
  in.expect("bank_hash");
  const std::string hash = in.next();
  if (hash != hex64(bank_hash(bank)))
    throw InvalidArgument("DOMINO model was trained on a different sample bank (hash " + hash + ")");

  DominoConfig c;
  in.expect("config");
  in.expect("max_epochs");
  c.max_epochs = in.count();
  in.expect("delta_fraction");
  c.delta_fraction = in.number();
  in.expect("outlier_fraction");
  c.outlier_fraction = in.number();
  in.expect("lambda");
  c.lambda = in.number();
  in.expect("visit_normalizer");
  const auto vn = parse_visit_normalizer(in.next());
  if (!vn) throw ParseError("unknown visit_normalizer", in.line());
  c.visit_normalizer = *vn;
  in.expect("performance_kind");
  const auto pk = parse_performance_kind(in.next());
  if (!pk) throw ParseError("unknown performance_kind", in.line());
  c.performance_kind = *pk;
  in.expect("forecast_walks");
  c.forecast_walks = in.count();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), in.line());
  }

  in.expect("stop_reason");
  const auto reason = parse_stop_reason(in.next());
  if (!reason) throw ParseError("unknown stop_reason", in.line());
  in.expect("final_weights");
  Eigen::VectorXd final_weights = read_vector(in, bank.count());

  in.expect("epochs");
  const std::size_t epochs = in.count();
  std::vector<EpochRecord> history;
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord rec;
    in.expect("epoch");
    rec.epoch = in.count();
    in.expect("indices");
    const std::size_t n = in.count();
    if (n != bank.length()) throw ParseError("walk length does not match the bank", in.line());
    rec.walk_indices.resize(n);
    for (auto& i : rec.walk_indices) {
      const std::size_t one_based = in.count();
      if (one_based < 1 || one_based > bank.count()) throw ParseError("walk index out of range", in.line());
      i = one_based - 1;
    }
    in.expect("values");
    rec.walk_values = read_vector(in, bank.length());
    in.expect("performances");
    rec.performances = read_vector(in, bank.count());
    in.expect("mean_performance");
    rec.mean_performance = in.number();
    in.expect("weights");
    rec.weights = read_vector(in, bank.count());
    history.push_back(std::move(rec));
  }
  in.expect("end");
  return DominoModel{bank, c, std::move(final_weights), std::move(history), *reason};
}

}  // namespace domino::walk

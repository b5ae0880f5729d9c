#include "commands.hpp"

#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "domino/detail/text.hpp"
#include "domino/errors.hpp"
#include "domino/random.hpp"

namespace domino::cli {

namespace {

namespace fs = std::filesystem;

void require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw InvalidArgument(std::string("config key paths.") + key + " is required");
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  return in;
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  std::ostringstream buf;
  body(buf);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << buf.str();
  out.flush();
  if (!out) throw IoError("write to '" + p.string() + "' failed");
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

template <class F>
auto stage(const char* tag, F&& f) {
  try {
    return f();
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(std::string(tag) + ": " + e.what(), e.attempted_jitter());
  } catch (const DegenerateWeights& e) {
    throw DegenerateWeights(std::string(tag) + ": " + e.what());
  }
}

template <class T, class F>
T parse_file(const fs::path& p, F&& parse) {
  std::ifstream in = open_in(p);
  try {
    return parse(in);
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.what(), 0);
  }
}

void write_study(const fs::path& dir, const std::string& stem, const evalx::StudyResult& result,
                 const std::string& title, std::ostream& out) {
  make_dir(dir);
  write_file(dir / (stem + "_scores.csv"), [&](std::ostream& o) { evalx::write_scores_csv(o, result); });
  write_file(dir / (stem + "_summary.csv"), [&](std::ostream& o) { evalx::write_summary_csv(o, result); });
  write_file(dir / (stem + ".md"), [&](std::ostream& o) { evalx::write_markdown(o, result, title); });
  evalx::write_markdown(out, result, title);
  out << "wrote " << (dir / (stem + "_summary.csv")).string() << '\n';
}

}  // namespace

void cmd_generate(const RunConfig& config, std::ostream& out) {
  require_path(config.output, "output");
  const auto grid = series::make_grid(config.grid_start, config.grid_step, config.length);
  const auto data = series::generate_synthetic(config.synthetic_spec(), grid, config.series_count);
  write_file(config.output, [&](std::ostream& o) { series::write_dataset_csv(o, data); });
  out << "wrote " << data.count() * grid.size() << " rows to " << config.output.string() << '\n';
}

void cmd_train(const RunConfig& config, std::ostream& out) {
  require_path(config.data, "data");
  require_path(config.model_dir, "model_dir");
  const auto data = parse_file<series::Dataset>(config.data, [](std::istream& in) {
    return series::read_dataset_csv(in);
  });

  const auto model = stage("magma fit", [&] { return magma::fit_magma(data, config.em); });
  const auto bank = stage("bank sampling", [&] { return evalx::make_bank(model, data, derive_seed(config.seed, {1})); });
  const auto dm = stage("domino training", [&] {
    return walk::train_domino(bank, config.domino, derive_seed(config.seed, {2}));
  });

  make_dir(config.model_dir);
  write_file(config.model_dir / kMagmaModelFile, [&](std::ostream& o) { magma::save_model(o, model); });
  write_file(config.model_dir / kBankFile, [&](std::ostream& o) { walk::save_bank(o, bank); });
  write_file(config.model_dir / kDominoModelFile, [&](std::ostream& o) { walk::save_model(o, dm); });

  out << "em_iterations=" << model.iterations << " converged=" << (model.converged ? "true" : "false") << '\n';
  out << "stop_reason=" << walk::to_string(dm.stop_reason) << " epochs=" << dm.history.size() << '\n';
}

void cmd_forecast(const RunConfig& config, std::ostream& out) {
  require_path(config.model_dir, "model_dir");
  require_path(config.observed, "observed");
  require_path(config.output, "output");
  const auto bank = parse_file<walk::SampleBank>(config.model_dir / kBankFile,
                                                 [](std::istream& in) { return walk::load_bank(in); });
  const auto dm = parse_file<walk::DominoModel>(config.model_dir / kDominoModelFile,
                                                [&](std::istream& in) { return walk::load_model(in, bank); });
  const auto pts = parse_file<series::Points>(config.observed, [](std::istream& in) {
    return series::read_points_csv(in);
  });

  const auto& grid = bank.grid();
  const std::size_t m = pts.t.size();
  if (m >= grid.size())
    throw InvalidArgument("observed has " + std::to_string(m) + " points; the model grid has only " +
                          std::to_string(grid.size()));
  for (std::size_t k = 0; k < m; ++k)
    if (grid.index_of(pts.t[k]) != static_cast<std::ptrdiff_t>(k))
      throw InvalidArgument("observed t=" + detail::format_double(pts.t[k]) + " is not grid point " +
                            std::to_string(k) + " of the model grid");

  const series::TimeSeries observed(0, grid.slice(0, m), Eigen::Map<const Eigen::VectorXd>(pts.y.data(), m));
  const Eigen::VectorXd fc = walk::forecast(dm, observed, derive_seed(config.seed, {3}), config.domino.forecast_walks);

  write_file(config.output, [&](std::ostream& o) {
    o << "t,y_pred\n";
    for (std::size_t k = 0; k < grid.size(); ++k)
      o << detail::format_double(grid.point(k)) << ',' << detail::format_double(fc[static_cast<Eigen::Index>(k)])
        << '\n';
  });
  out << "wrote " << grid.size() << " rows (" << m << " observed) to " << config.output.string() << '\n';
}

void cmd_study(const RunConfig& config, std::ostream& out) {
  require_path(config.output, "output");
  const auto sc = config.study();
  const bool cv = config.mode == StudyMode::cv;
  const auto result = cv ? evalx::run_cv_study(sc) : evalx::run_length_study(sc);
  write_study(config.output, cv ? "cv" : "length", result,
              cv ? "MAE by length (leave-one-out)" : "MAE by length (hold-out)", out);
}

void cmd_ablate(const RunConfig& config, std::ostream& out) {
  require_path(config.output, "output");
  const auto hp = config.hyperparameter;
  const auto values = config.values.empty() ? evalx::default_grid(hp) : config.values;
  const auto result = evalx::run_ablation(hp, values, config.study());
  const std::string name(evalx::to_string(hp));
  write_study(config.output, "ablation_" + name, result,
              "MAE by " + name + " (N=" + std::to_string(config.ablation_length) + ")", out);
}

}  // namespace domino::cli

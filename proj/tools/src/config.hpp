#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "domino/evalx.hpp"
#include "domino/magma.hpp"
#include "domino/series.hpp"
#include "domino/walk.hpp"

namespace domino::cli {

enum class StudyMode { holdout, cv };

// Everything a command may read. Loaded from an INI-style file with one
// section per module, then patched by `--set section.key=value`.
struct RunConfig {
  std::uint64_t seed = 20240601;
  std::size_t threads = 0;

  // [data]
  std::size_t series_count = 10;
  std::size_t length = 100;
  double grid_start = 0.0;
  double grid_step = 1.0;

  series::SyntheticSpec synthetic;  // [synthetic]; its seed comes from `seed`
  magma::EmConfig em;               // [em]
  walk::DominoConfig domino;        // [domino]

  // [study]
  std::vector<std::size_t> lengths{50, 100, 150, 200, 250};
  std::size_t runs = 10;
  double prefix_fraction = 0.5;
  StudyMode mode = StudyMode::holdout;
  gp::OptimizerConfig predict_optimizer{3, 100, 1e-6};

  // [ablation]
  evalx::Hyperparameter hyperparameter = evalx::Hyperparameter::lambda;
  std::vector<double> values;  // empty: the default grid
  std::size_t ablation_length = 100;
  bool ablation_cv = true;

  // [paths]
  std::filesystem::path data;
  std::filesystem::path observed;
  std::filesystem::path model_dir;
  std::filesystem::path output;

  void validate() const;
  evalx::StudyConfig study() const;
  series::SyntheticSpec synthetic_spec() const;
};

// Sets one `section.key` (top-level keys have no section). Throws ParseError
// for unknown keys and malformed values.
void set_value(RunConfig& config, std::string_view key, std::string_view value);
// `section.key=value`.
void apply_override(RunConfig& config, std::string_view assignment);

RunConfig read_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
// Round-trips through read_config.
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace domino::cli

#include "config.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "domino/detail/text.hpp"
#include "domino/errors.hpp"

namespace domino::cli {

namespace {

using detail::format_double;

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ParseError("config key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                       std::string(value) + "'",
                   0);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  const auto i = detail::parse_int(v);
  if (!i || *i < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::uint64_t>(*i);
}

std::size_t to_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(std::string_view key, std::string_view v) {
  const auto d = detail::parse_double(v);
  if (!d) bad_value(key, v, "a finite number");
  return *d;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = detail::trim(v);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  bad_value(key, v, "true or false");
}

template <class T, class F>
std::vector<T> to_list(std::string_view v, F&& one) {
  std::vector<T> out;
  if (detail::trim(v).empty()) return out;
  for (auto f : detail::split(v, ',')) out.push_back(one(detail::trim(f)));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& one) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + one(xs[i]);
  return s;
}

std::vector<series::PeriodicComponent> to_components(std::string_view key, std::string_view v) {
  return to_list<series::PeriodicComponent>(v, [&](std::string_view f) {
    const auto parts = detail::split(f, ':');
    if (parts.size() != 3) bad_value(key, f, "amplitude:period:phase");
    return series::PeriodicComponent{to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
  });
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                      \
  {name,                                                                              \
   {[](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_size(k, v); }, \
    [](const RunConfig& c) { return std::to_string(c.member); }}}
#define DOUBLE_FIELD(name, member)                                                      \
  {name,                                                                                \
   {[](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_double(k, v); }, \
    [](const RunConfig& c) { return format_double(c.member); }}}

// Ordered as written by write_config; the prefix before '.' is the section.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_u64(k, v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      SIZE_FIELD("threads", threads),

      SIZE_FIELD("data.series_count", series_count),
      SIZE_FIELD("data.length", length),
      DOUBLE_FIELD("data.grid_start", grid_start),
      DOUBLE_FIELD("data.grid_step", grid_step),

      DOUBLE_FIELD("synthetic.trend_slope", synthetic.trend_slope),
      DOUBLE_FIELD("synthetic.trend_intercept", synthetic.trend_intercept),
      {"synthetic.components",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.synthetic.periodic_components = to_components(k, v);
        },
        [](const RunConfig& c) {
          return join(c.synthetic.periodic_components, [](const series::PeriodicComponent& p) {
            return format_double(p.amplitude) + ":" + format_double(p.period) + ":" + format_double(p.phase);
          });
        }}},
      DOUBLE_FIELD("synthetic.noise_std", synthetic.noise_std),
      DOUBLE_FIELD("synthetic.amplitude_jitter", synthetic.amplitude_jitter),
      DOUBLE_FIELD("synthetic.phase_jitter", synthetic.phase_jitter),

      SIZE_FIELD("em.max_iterations", em.max_iterations),
      DOUBLE_FIELD("em.tolerance", em.tolerance),
      SIZE_FIELD("em.restarts", em.m_step.restarts),
      SIZE_FIELD("em.optimizer_iterations", em.m_step.max_iterations),
      DOUBLE_FIELD("em.optimizer_tolerance", em.m_step.tolerance),
      {"em.period",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (detail::trim(v) == "none")
            c.em.period.reset();
          else
            c.em.period = to_double(k, v);
        },
        [](const RunConfig& c) { return c.em.period ? format_double(*c.em.period) : std::string("none"); }}},

      SIZE_FIELD("domino.max_epochs", domino.max_epochs),
      DOUBLE_FIELD("domino.delta", domino.delta_fraction),
      DOUBLE_FIELD("domino.outlier_fraction", domino.outlier_fraction),
      DOUBLE_FIELD("domino.lambda", domino.lambda),
      {"domino.visit_normalizer",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          const auto n = walk::parse_visit_normalizer(detail::trim(v));
          if (!n) bad_value(k, v, "walk_length or series_count");
          c.domino.visit_normalizer = *n;
        },
        [](const RunConfig& c) { return std::string(walk::to_string(c.domino.visit_normalizer)); }}},
      {"domino.performance",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          const auto p = walk::parse_performance_kind(detail::trim(v));
          if (!p) bad_value(k, v, "inverse_mae");
          c.domino.performance_kind = *p;
        },
        [](const RunConfig& c) { return std::string(walk::to_string(c.domino.performance_kind)); }}},
      SIZE_FIELD("domino.forecast_walks", domino.forecast_walks),

      {"study.lengths",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.lengths = to_list<std::size_t>(v, [&](std::string_view f) { return to_size(k, f); });
        },
        [](const RunConfig& c) { return join(c.lengths, [](std::size_t n) { return std::to_string(n); }); }}},
      SIZE_FIELD("study.runs", runs),
      DOUBLE_FIELD("study.prefix_fraction", prefix_fraction),
      {"study.mode",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          v = detail::trim(v);
          if (v == "holdout")
            c.mode = StudyMode::holdout;
          else if (v == "cv")
            c.mode = StudyMode::cv;
          else
            bad_value(k, v, "holdout or cv");
        },
        [](const RunConfig& c) { return std::string(c.mode == StudyMode::cv ? "cv" : "holdout"); }}},
      SIZE_FIELD("study.predict_restarts", predict_optimizer.restarts),
      SIZE_FIELD("study.predict_iterations", predict_optimizer.max_iterations),
      DOUBLE_FIELD("study.predict_tolerance", predict_optimizer.tolerance),

      {"ablation.hyperparameter",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          const auto hp = evalx::parse_hyperparameter(detail::trim(v));
          if (!hp) bad_value(k, v, "max_epochs, delta, outlier_fraction or lambda");
          c.hyperparameter = *hp;
        },
        [](const RunConfig& c) { return std::string(evalx::to_string(c.hyperparameter)); }}},
      {"ablation.values",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.values = to_list<double>(v, [&](std::string_view f) { return to_double(k, f); });
        },
        [](const RunConfig& c) { return join(c.values, [](double x) { return format_double(x); }); }}},
      SIZE_FIELD("ablation.length", ablation_length),
      {"ablation.cv",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.ablation_cv = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.ablation_cv ? "true" : "false"); }}},

      {"paths.data",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.data = std::string(detail::trim(v)); },
        [](const RunConfig& c) { return c.data.string(); }}},
      {"paths.observed",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.observed = std::string(detail::trim(v)); },
        [](const RunConfig& c) { return c.observed.string(); }}},
      {"paths.model_dir",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.model_dir = std::string(detail::trim(v)); },
        [](const RunConfig& c) { return c.model_dir.string(); }}},
      {"paths.output",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.output = std::string(detail::trim(v)); },
        [](const RunConfig& c) { return c.output.string(); }}},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD

}  // namespace

void RunConfig::validate() const {
  if (series_count < 2) throw InvalidArgument("data.series_count must be >= 2");
  if (length < 2) throw InvalidArgument("data.length must be >= 2");
  if (!(grid_step > 0.0)) throw InvalidArgument("data.grid_step must be > 0");
  synthetic_spec().validate();
  em.validate();
  domino.validate();
  study().validate();
}

series::SyntheticSpec RunConfig::synthetic_spec() const {
  series::SyntheticSpec s = synthetic;
  s.seed = seed;
  return s;
}

evalx::StudyConfig RunConfig::study() const {
  evalx::StudyConfig s;
  s.lengths = lengths;
  s.runs = runs;
  s.series_count = series_count;
  s.prefix_fraction = prefix_fraction;
  s.seed = seed;
  s.grid_start = grid_start;
  s.grid_step = grid_step;
  s.synthetic = synthetic;
  s.em = em;
  s.predict_optimizer = predict_optimizer;
  s.domino = domino;
  s.ablation_length = ablation_length;
  s.ablation_cv = ablation_cv;
  s.threads = threads;
  return s;
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, detail::trim(value));
      return;
    }
  }
  throw ParseError("unknown config key '" + std::string(key) + "'", 0);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ParseError("override '" + std::string(assignment) + "' is not key=value", 0);
  set_value(config, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig read_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  RunConfig config;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set_value(config, name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ParseError("nested key '" + name + "." + key + "'", 0);
      set_value(config, name + "." + key, leaf.data());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return read_config(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    out << key << " = " << field.get(config) << '\n';
  }
}

}  // namespace domino::cli

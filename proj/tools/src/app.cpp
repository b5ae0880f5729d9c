#include "app.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "domino/errors.hpp"

namespace domino::cli {

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::size_t> threads;
  bool print_config = false;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& s : o.overrides) apply_override(c, s);
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble forecasting over multi-task GP sample paths", "domino"};
  app.require_subcommand(1);

  Options opts;
  using Command = void (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"generate", "Write a synthetic dataset CSV to paths.output", cmd_generate},
      {"train", "Fit MAGMA on paths.data, sample the bank and train DOMINO into paths.model_dir", cmd_train},
      {"forecast", "Forecast paths.observed from the models in paths.model_dir into paths.output", cmd_forecast},
      {"study", "Run the length study into the directory paths.output", cmd_study},
      {"ablate", "Sweep ablation.hyperparameter into the directory paths.output", cmd_ablate},
  };
  Command chosen = nullptr;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opts.config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opts.overrides, "Override one key, e.g. domino.lambda=1")->take_all();
    sub->add_option("-j,--threads", opts.threads, "Worker thread cap (0: all cores)");
    sub->add_flag("--print-config", opts.print_config, "Print the resolved config and exit");
    sub->callback([&chosen, f = fn] { chosen = f; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ExitCode::ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ExitCode::ok;
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "domino: " << e.what() << "\n" << sub->help();
    return ExitCode::usage;
  }

  try {
    const RunConfig config = resolve(opts);
    if (opts.print_config) {
      write_config(out, config);
      return ExitCode::ok;
    }
    chosen(config, out);
    return ExitCode::ok;
  } catch (const IoError& e) {
    err << "domino: I/O error: " << e.what() << '\n';
    return ExitCode::io;
  } catch (const ParseError& e) {
    err << "domino: parse error: " << e.what() << '\n';
    return ExitCode::parse;
  } catch (const InvalidArgument& e) {
    err << "domino: invalid input: " << e.what() << '\n';
    return ExitCode::contract;
  } catch (const NumericalFailure& e) {
    err << "domino: numerical failure: " << e.what() << '\n';
    return ExitCode::numerical;
  } catch (const DegenerateWeights& e) {
    err << "domino: numerical failure: " << e.what() << '\n';
    return ExitCode::numerical;
  }
}

}  // namespace domino::cli

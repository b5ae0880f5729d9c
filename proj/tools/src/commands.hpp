#pragma once

#include <iosfwd>

#include "config.hpp"

namespace domino::cli {

// Each command reports progress on `out` and throws domino errors; the
// caller maps them to exit codes.
void cmd_generate(const RunConfig& config, std::ostream& out);
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_forecast(const RunConfig& config, std::ostream& out);
void cmd_study(const RunConfig& config, std::ostream& out);
void cmd_ablate(const RunConfig& config, std::ostream& out);

inline constexpr const char* kMagmaModelFile = "magma.model";
inline constexpr const char* kBankFile = "bank.txt";
inline constexpr const char* kDominoModelFile = "domino.model";

}  // namespace domino::cli

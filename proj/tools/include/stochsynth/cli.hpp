#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace stochsynth::cli {

/// Process exit codes shared by every subcommand.
enum Exit : int {
  kOk = 0,
  kIoError = 1,          // unreadable or malformed input, missing artifacts
  kCertificateFailed = 2,
  kInfeasible = 3,       // no certified parameters, or an uncertified result
  kEmptyWinningSet = 4,
};

struct Options {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::optional<std::filesystem::path> out;
  std::optional<double> epsilon;
  std::optional<double> tau;
  std::optional<std::string> mode;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> periods;
};

int cmd_validate(const Options& opt);
int cmd_abstract(const Options& opt);
int cmd_synthesize(const Options& opt);
int cmd_simulate(const Options& opt);
int cmd_compare(const Options& opt);
int cmd_label(const Options& opt);

/// Parses argv, dispatches to a subcommand and maps errors onto exit codes.
int run(int argc, char** argv);

}  // namespace stochsynth::cli

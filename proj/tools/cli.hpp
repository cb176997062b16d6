#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "symcons/encoder.hpp"
#include "symcons/trainer.hpp"

namespace symcons::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Parsed settings of the train command.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TaskKind task = TaskKind::symmetric;
  std::filesystem::path train_path;
  std::optional<std::filesystem::path> init_checkpoint;
  std::filesystem::path out_dir;
  std::vector<std::uint64_t> seeds;

  /// Checks seeds and resolves every input path; throws before any work starts.
  void resolve();
};

/// "1,2,3" -> {1, 2, 3}. Throws ContractError on empty or malformed lists.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Runs the command line and maps failures to exit codes. args excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace symcons::cli

#pragma once

// Subcommand bodies. Every command is a pure function of its resolved
// settings document, which is also what the run manifest records; replaying
// a manifest calls the same function with the same settings.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "stsep/error.hpp"
#include "stsep/io.hpp"

namespace stsep::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitRuntime = 3,
  kExitCheckFailed = 4,
};

/// Settings that fail validation before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration file: {"synth": {...}, "model": {...},
/// "fit": {...}}, every section optional. A document without any of those
/// keys is read as a bare synth section.
Json LoadExperimentConfig(const std::filesystem::path& path);

int RunSimulate(const Json& settings, const std::filesystem::path& out);
int RunFit(const Json& settings, const std::filesystem::path& out);
int RunSelect(const Json& settings, const std::filesystem::path& out);
int RunCompareIca(const Json& settings, const std::filesystem::path& out);
int RunGradcheck(const Json& settings, const std::filesystem::path& out);

/// Re-executes the command recorded in `manifest` into `out`, then compares
/// every output digest against the recorded ones (kExitCheckFailed on any
/// difference).
int RunReplay(const std::filesystem::path& manifest, const std::filesystem::path& out);

}  // namespace stsep::cli

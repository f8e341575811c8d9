#pragma once

// `astitch` command-line driver. Subcommands: toy-corpus, extract, train,
// edit, eval, plot. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnstitch/melkit.hpp"
#include "attnstitch/stitcher.hpp"

namespace astitch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

inline const std::vector<std::string> kMethods = {"attentionstitch", "swap", "featswitch"};

struct RunConfig {
  mel::MelConfig mel;
  stitch::StitchConfig model;
  std::size_t steps = 500;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double mask_fraction = 0.1;
  std::size_t batch_size = 1;
  std::string method = "attentionstitch";  // or "all"
  std::size_t griffin_lim_iters = 32;

  /// Throws UsageError on the first invalid field.
  void validate() const;
};

/// Flat `key = value` lines with optional [section] headers and # comments.
/// Values: integers, floats, booleans, double-quoted strings. Section names
/// are dropped, so `[train]\nsteps = 5` sets `steps`.
std::string toml_subset_to_json(const std::string& text);

/// Overlays keys from a JSON object (or TOML subset when `toml`) onto `base`.
RunConfig parse_run_config(const std::string& text, bool toml, RunConfig base = {});
/// Format from the extension: .toml, otherwise JSON.
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace astitch::cli

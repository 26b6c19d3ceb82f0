#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace solarmap::cli {

/// Bad input: malformed config, missing files, schema violations. Exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Defaults shared by every subcommand. Loaded from a JSON file given with
/// --config; command-line flags override individual values.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  int zoom = 20;
  int width_px = 640;
  int height_px = 640;
  double nms_roof = 0.2;
  double nms_pv = 0.1;
  std::string fetch_endpoint;
  std::string fetch_cache_dir = "tiles";
  double fetch_rate = 1.0;
  double fetch_burst = 1.0;
  int fetch_max_attempts = 4;
  std::string credential_env = "SOLARMAP_TILE_KEY";
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  int top_k = 20;
  int ame_points = 20;

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Runs one command line (args exclude the program name) and returns the
/// process exit code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace solarmap::cli

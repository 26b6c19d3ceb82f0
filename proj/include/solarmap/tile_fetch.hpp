#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>

#include "solarmap/geo.hpp"

namespace solarmap::ingest {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{4000};
};

/// Endpoint templates may use {lat}, {lon}, {zoom}, {width}, {height} and
/// {key}; the key comes from the credential environment variable.
struct TileFetchConfig {
  std::string endpoint_template;
  std::filesystem::path cache_dir;
  double rate_per_second = 1.0;
  double burst = 1.0;
  RetryPolicy retry;
  bool offline = false;
  std::filesystem::path fixture_dir;
  std::string credential_env = "SOLARMAP_TILE_KEY";

  void validate() const;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Performs one GET. Throws std::runtime_error on connection failure.
using Transport = std::function<HttpResponse(const std::string& url)>;

/// cpp-httplib backed transport.
Transport http_transport(std::chrono::seconds timeout = std::chrono::seconds(30));

class FetchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TileSource { Cache, Network, Fixture };
std::string_view to_string(TileSource s);

struct FetchProvenance {
  std::string cache_key;
  std::string url;  // credential redacted
  TileSource source = TileSource::Cache;
  int attempts = 0;
  std::size_t bytes = 0;
};

struct FetchedTile {
  std::string bytes;
  FetchProvenance provenance;
};

/// Blocking token bucket; starts full.
class TokenBucket {
 public:
  TokenBucket(double rate_per_second, double capacity);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

/// Cache file stem for a footprint: stable hash of the endpoint template,
/// centre, zoom and pixel size.
std::string cache_key(const std::string& endpoint_template, const geo::ImageFootprint& fp);

std::string expand_url(const std::string& endpoint_template, const geo::ImageFootprint& fp,
                       const std::string& credential);

/// Cache-first tile client. All network attempts, retries included, pass
/// through one token bucket.
class TileFetcher {
 public:
  explicit TileFetcher(TileFetchConfig config, Transport transport = http_transport());

  FetchedTile fetch(const geo::ImageFootprint& fp);
  std::size_t network_calls() const { return network_calls_; }

 private:
  std::filesystem::path cache_path(const std::string& key) const;

  TileFetchConfig config_;
  Transport transport_;
  TokenBucket bucket_;
  std::size_t network_calls_ = 0;
};

FetchedTile fetch_tile(const geo::ImageFootprint& fp, const TileFetchConfig& config);

}  // namespace solarmap::ingest

#include "solarmap/tile_fetch.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "solarmap/table_io.hpp"

namespace solarmap::ingest {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

void TileFetchConfig::validate() const {
  if (!(rate_per_second > 0.0)) throw std::invalid_argument("fetch: rate must be positive");
  if (!(burst >= 1.0)) throw std::invalid_argument("fetch: burst must be at least 1");
  if (retry.max_attempts < 1) throw std::invalid_argument("fetch: at least one attempt required");
  if (cache_dir.empty()) throw std::invalid_argument("fetch: cache directory required");
  if (!offline && endpoint_template.empty()) throw std::invalid_argument("fetch: endpoint template required online");
}

std::string_view to_string(TileSource s) {
  switch (s) {
    case TileSource::Cache: return "cache";
    case TileSource::Network: return "network";
    case TileSource::Fixture: return "fixture";
  }
  return "unknown";
}

TokenBucket::TokenBucket(double rate_per_second, double capacity)
    : rate_(rate_per_second), capacity_(capacity), tokens_(capacity), last_(std::chrono::steady_clock::now()) {
  if (!(rate_ > 0.0) || !(capacity_ >= 1.0)) throw std::invalid_argument("fetch: invalid token bucket");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::nanoseconds>(wait) + std::chrono::microseconds(1));
  }
}

std::string cache_key(const std::string& endpoint_template, const geo::ImageFootprint& fp) {
  const std::string canonical = fmt::format("{}|{:.8f}|{:.8f}|{}|{}x{}", endpoint_template, fp.center.lat,
                                            fp.center.lon, fp.zoom, fp.width_px, fp.height_px);
  return fmt::format("{:016x}", fnv1a(canonical));
}

std::string expand_url(const std::string& endpoint_template, const geo::ImageFootprint& fp,
                       const std::string& credential) {
  std::string url = endpoint_template;
  replace_all(url, "{lat}", fmt::format("{:.8f}", fp.center.lat));
  replace_all(url, "{lon}", fmt::format("{:.8f}", fp.center.lon));
  replace_all(url, "{zoom}", std::to_string(fp.zoom));
  replace_all(url, "{width}", std::to_string(fp.width_px));
  replace_all(url, "{height}", std::to_string(fp.height_px));
  replace_all(url, "{key}", credential);
  return url;
}

Transport http_transport(std::chrono::seconds timeout) {
  return [timeout](const std::string& url) -> HttpResponse {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::runtime_error(fmt::format("fetch: malformed url {}", url));
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    auto res = client.Get(path);
    if (!res) throw std::runtime_error(fmt::format("fetch: {}", httplib::to_string(res.error())));
    return {res->status, res->body};
  };
}

TileFetcher::TileFetcher(TileFetchConfig config, Transport transport)
    : config_(std::move(config)), transport_(std::move(transport)), bucket_(config_.rate_per_second, config_.burst) {
  config_.validate();
}

std::filesystem::path TileFetcher::cache_path(const std::string& key) const {
  return config_.cache_dir / (key + ".tile");
}

FetchedTile TileFetcher::fetch(const geo::ImageFootprint& fp) {
  FetchedTile tile;
  auto& prov = tile.provenance;
  prov.cache_key = cache_key(config_.endpoint_template, fp);
  prov.url = expand_url(config_.endpoint_template, fp, "REDACTED");

  const auto cached = cache_path(prov.cache_key);
  if (std::filesystem::exists(cached)) {
    tile.bytes = io::read_file(cached);
    prov.source = TileSource::Cache;
    prov.bytes = tile.bytes.size();
    return tile;
  }

  if (config_.offline) {
    const auto fixture = config_.fixture_dir / (prov.cache_key + ".tile");
    if (config_.fixture_dir.empty() || !std::filesystem::exists(fixture)) {
      throw FetchError(fmt::format("fetch: offline cache miss for {}", prov.cache_key));
    }
    tile.bytes = io::read_file(fixture);
    prov.source = TileSource::Fixture;
    prov.bytes = tile.bytes.size();
    return tile;
  }

  const char* key = std::getenv(config_.credential_env.c_str());
  const std::string url = expand_url(config_.endpoint_template, fp, key ? key : "");
  auto backoff = config_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    bucket_.acquire();
    ++network_calls_;
    prov.attempts = attempt;
    try {
      const HttpResponse res = transport_(url);
      if (res.status == 200) {
        io::write_file_atomic(cached, res.body);
        tile.bytes = res.body;
        prov.source = TileSource::Network;
        prov.bytes = tile.bytes.size();
        return tile;
      }
      last_error = fmt::format("HTTP {}", res.status);
      if (!retryable(res.status)) break;
    } catch (const std::runtime_error& e) {
      last_error = e.what();
    }
    if (attempt < config_.retry.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(config_.retry.max_backoff,
                         std::chrono::milliseconds(static_cast<long long>(backoff.count() * config_.retry.multiplier)));
    }
  }
  throw FetchError(fmt::format("fetch: {} failed after {} attempt(s): {}", prov.url, prov.attempts, last_error));
}

FetchedTile fetch_tile(const geo::ImageFootprint& fp, const TileFetchConfig& config) {
  TileFetcher fetcher(config);
  return fetcher.fetch(fp);
}

}  // namespace solarmap::ingest

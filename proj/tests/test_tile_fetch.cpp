#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "solarmap/table_io.hpp"
#include "solarmap/tile_fetch.hpp"
#include "support/oracles.hpp"

// After the Eigen users: resolv.h defines _res.
#include "httplib.h"

using namespace solarmap;
using ingest::HttpResponse;
using ingest::TileFetchConfig;
using ingest::TileFetcher;

namespace {

const auto kFp = geo::make_footprint({-104.99, 39.7}, 20, 640, 640);

TileFetchConfig config_in(const oracle::TempDir& dir) {
  TileFetchConfig c;
  c.endpoint_template = "https://tiles.example/{zoom}/{lat}/{lon}.png?size={width}x{height}&key={key}";
  c.cache_dir = dir / "cache";
  c.rate_per_second = 1000;
  c.burst = 1000;
  c.retry.initial_backoff = std::chrono::milliseconds(1);
  c.retry.max_backoff = std::chrono::milliseconds(4);
  c.credential_env = "SOLARMAP_TEST_TILE_KEY";
  return c;
}

// Replays a fixed list of statuses and records every URL it sees.
struct ScriptedTransport {
  std::vector<int> statuses;
  std::shared_ptr<std::vector<std::string>> seen = std::make_shared<std::vector<std::string>>();

  ingest::Transport make() const {
    auto s = statuses;
    auto log = seen;
    return [s, log](const std::string& url) {
      const std::size_t i = log->size();
      log->push_back(url);
      const int status = i < s.size() ? s[i] : 200;
      return HttpResponse{status, status == 200 ? "tile-bytes" : "error"};
    };
  }
};

}  // namespace

TEST_CASE("cache keys depend on endpoint, centre, zoom and size") {
  const auto k = ingest::cache_key("a", kFp);
  CHECK(k.size() == 16);
  CHECK(k == ingest::cache_key("a", kFp));
  CHECK(k != ingest::cache_key("b", kFp));
  CHECK(k != ingest::cache_key("a", geo::make_footprint({-104.99, 39.7}, 19, 640, 640)));
  CHECK(k != ingest::cache_key("a", geo::make_footprint({-104.99, 39.7}, 20, 512, 640)));
  CHECK(k != ingest::cache_key("a", geo::make_footprint({-104.98, 39.7}, 20, 640, 640)));
}

TEST_CASE("second fetch is served from the cache") {
  oracle::TempDir dir("fetch_cache");
  ::setenv("SOLARMAP_TEST_TILE_KEY", "s3cret", 1);
  ScriptedTransport t;
  TileFetcher f(config_in(dir), t.make());
  const auto first = f.fetch(kFp);
  CHECK(first.bytes == "tile-bytes");
  CHECK(first.provenance.source == ingest::TileSource::Network);
  CHECK(f.network_calls() == 1);
  // The transport sees the key, the provenance never does.
  CHECK(t.seen->at(0).find("key=s3cret") != std::string::npos);
  CHECK(first.provenance.url.find("s3cret") == std::string::npos);
  CHECK(first.provenance.url.find("key=REDACTED") != std::string::npos);

  const auto second = f.fetch(kFp);
  CHECK(second.bytes == "tile-bytes");
  CHECK(second.provenance.source == ingest::TileSource::Cache);
  CHECK(f.network_calls() == 1);
  CHECK(t.seen->size() == 1);

  // A new fetcher over the same directory also hits the cache.
  TileFetcher g(config_in(dir), t.make());
  CHECK(g.fetch(kFp).provenance.source == ingest::TileSource::Cache);
  CHECK(g.network_calls() == 0);
  ::unsetenv("SOLARMAP_TEST_TILE_KEY");
}

TEST_CASE("retries on throttling and server errors, not on client errors") {
  oracle::TempDir dir("fetch_retry");
  ScriptedTransport flaky{{503, 429, 200}};
  TileFetcher f(config_in(dir), flaky.make());
  const auto tile = f.fetch(kFp);
  CHECK(tile.provenance.attempts == 3);
  CHECK(f.network_calls() == 3);

  oracle::TempDir dir2("fetch_404");
  ScriptedTransport missing{{404}};
  TileFetcher g(config_in(dir2), missing.make());
  CHECK_THROWS_AS(g.fetch(kFp), ingest::FetchError);
  CHECK(g.network_calls() == 1);

  oracle::TempDir dir3("fetch_down");
  ScriptedTransport down{{500, 500, 500, 500, 500}};
  TileFetcher h(config_in(dir3), down.make());
  CHECK_THROWS_AS(h.fetch(kFp), ingest::FetchError);
  CHECK(h.network_calls() == 4);

  oracle::TempDir dir4("fetch_throw");
  int calls = 0;
  TileFetcher k(config_in(dir4), [&](const std::string&) -> HttpResponse {
    if (++calls < 2) throw std::runtime_error("connection refused");
    return {200, "ok"};
  });
  CHECK(k.fetch(kFp).bytes == "ok");
}

TEST_CASE("offline mode never touches the transport") {
  oracle::TempDir dir("fetch_offline");
  auto c = config_in(dir);
  c.offline = true;
  c.fixture_dir = dir / "fixtures";
  std::filesystem::create_directories(c.fixture_dir);
  int calls = 0;
  ingest::Transport counting = [&](const std::string&) {
    ++calls;
    return HttpResponse{200, "net"};
  };
  TileFetcher f(c, counting);
  CHECK_THROWS_AS(f.fetch(kFp), ingest::FetchError);
  io::write_file_atomic(c.fixture_dir / (ingest::cache_key(c.endpoint_template, kFp) + ".tile"), "fixture");
  const auto tile = f.fetch(kFp);
  CHECK(tile.bytes == "fixture");
  CHECK(tile.provenance.source == ingest::TileSource::Fixture);
  CHECK(calls == 0);
}

TEST_CASE("token bucket paces requests") {
  oracle::TempDir dir("fetch_rate");
  auto c = config_in(dir);
  c.rate_per_second = 2;
  c.burst = 1;
  ScriptedTransport t;
  TileFetcher f(c, t.make());
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 10; ++i) f.fetch(geo::make_footprint({-104.99 + i * 0.001, 39.7}, 20, 640, 640));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs >= 4.5);
  CHECK(secs < 6.0);
}

TEST_CASE("config validation") {
  oracle::TempDir dir("fetch_cfg");
  auto c = config_in(dir);
  c.rate_per_second = 0;
  CHECK_THROWS(c.validate());
  c = config_in(dir);
  c.endpoint_template.clear();
  CHECK_THROWS(c.validate());
}

TEST_CASE("HTTP transport against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Get("/tile", [&](const httplib::Request&, httplib::Response& res) {
    if (hits.fetch_add(1) == 0) {
      res.status = 503;
      return;
    }
    res.set_content("png-bytes", "image/png");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  oracle::TempDir dir("fetch_http");
  auto c = config_in(dir);
  c.endpoint_template = "http://127.0.0.1:" + std::to_string(port) + "/tile?z={zoom}&key={key}";
  TileFetcher f(c, ingest::http_transport(std::chrono::seconds(5)));
  const auto tile = f.fetch(kFp);
  CHECK(tile.bytes == "png-bytes");
  CHECK(tile.provenance.attempts == 2);
  CHECK(hits.load() == 2);
  server.stop();
  th.join();
}

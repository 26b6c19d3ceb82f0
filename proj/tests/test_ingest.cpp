#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "solarmap/ingest.hpp"
#include "solarmap/synth.hpp"
#include "support/oracles.hpp"

using namespace solarmap;
using geo::box_polygon;
using ingest::OverlayFeature;
using ingest::OverlayLayer;

namespace {

const auto& schema() { return ingest::FeatureSchema::standard(); }

OverlayFeature feature(std::string id, geo::Polygon p, std::optional<double> pop = std::nullopt) {
  return {std::move(id), std::move(p), {}, pop};
}

// Block group of 0.01 x 0.01 degrees near Denver.
constexpr double W = -105.0, S = 39.7, D = 0.01;

}  // namespace

TEST_CASE("largest-share join") {
  const auto bg = box_polygon(W, S, W + D, S + D);
  OverlayLayer inside{"j", {feature("far", box_polygon(W + 1, S, W + 1 + D, S + D)),
                            feature("city", box_polygon(W - D, S - D, W + 2 * D, S + 2 * D))}};
  CHECK(*ingest::spatial_join_largest_share(bg, inside).chosen == 1);

  // 60/40 split along a meridian.
  OverlayLayer split{"j", {feature("west", box_polygon(W - D, S - D, W + 0.6 * D, S + 2 * D)),
                           feature("east", box_polygon(W + 0.6 * D, S - D, W + 2 * D, S + 2 * D))}};
  const auto r = ingest::spatial_join_largest_share(bg, split);
  CHECK(*r.chosen == 0);
  CHECK(r.shares_m2[0] / (r.shares_m2[0] + r.shares_m2[1]) == doctest::Approx(0.6).epsilon(1e-3));
  CHECK(r.shares_m2[0] + r.shares_m2[1] == doctest::Approx(geo::polygon_area_m2(bg)).epsilon(1e-6));

  // Exact halves: the lexicographically smaller id wins wherever it sits.
  OverlayLayer tie{"j", {feature("b", box_polygon(W - D, S - D, W + 0.5 * D, S + 2 * D)),
                         feature("a", box_polygon(W + 0.5 * D, S - D, W + 2 * D, S + 2 * D))}};
  CHECK(tie.features[*ingest::spatial_join_largest_share(bg, tie).chosen].id == "a");

  OverlayLayer nowhere{"j", {feature("far", box_polygon(W + 1, S, W + 1 + D, S + D))}};
  CHECK_FALSE(ingest::spatial_join_largest_share(bg, nowhere).chosen.has_value());
}

TEST_CASE("most populous zip") {
  const auto bg = box_polygon(W, S, W + D, S + D);
  OverlayLayer single{"z", {feature("80202", box_polygon(W - D, S - D, W + 2 * D, S + 2 * D), 5.0)}};
  CHECK(*ingest::assign_zip_by_population(bg, single).chosen == 0);

  // The smaller-overlap zip is more populous and still wins.
  OverlayLayer two{"z", {feature("80203", box_polygon(W - D, S - D, W + 0.8 * D, S + 2 * D), 12000.0),
                         feature("80202", box_polygon(W + 0.8 * D, S - D, W + 2 * D, S + 2 * D), 30000.0)}};
  CHECK(two.features[*ingest::assign_zip_by_population(bg, two).chosen].id == "80202");

  OverlayLayer tie{"z", {feature("80210", box_polygon(W - D, S - D, W + 0.5 * D, S + 2 * D), 100.0),
                         feature("9999", box_polygon(W + 0.5 * D, S - D, W + 2 * D, S + 2 * D), 100.0)}};
  CHECK(tie.features[*ingest::assign_zip_by_population(bg, tie).chosen].id == "9999");

  OverlayLayer far{"z", {feature("80202", box_polygon(W + 1, S, W + 1 + D, S + D), 1.0)}};
  CHECK_FALSE(ingest::assign_zip_by_population(bg, far).chosen.has_value());
}

TEST_CASE("tract broadcast") {
  CHECK(ingest::tract_of("080310041021") == "08031004102");
  CHECK_THROWS(ingest::tract_of("0803100"));
  const ingest::TractTable tracts{{"08031004102", {{"Hail Risk", 12.5}, {"% Unemployed", 3.25}}}};
  const std::vector<std::string> bgs{"080310041021", "080310041022", "080310041023", "080310099991"};
  const auto r = ingest::broadcast_tract_to_blockgroups(tracts, bgs);
  REQUIRE(r.values.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(r.values.at(bgs[i]).at("Hail Risk") == 12.5);
    CHECK(r.values.at(bgs[i]).at("% Unemployed") == 3.25);
  }
  CHECK(r.unknown == std::vector<std::string>{"080310099991"});
}

TEST_CASE("adjacent-mean imputation") {
  const auto& s = schema();
  const std::string f = "Median Home Value";
  auto rec = [&](std::string id, std::optional<double> v) {
    auto r = ingest::BlockGroupRecord::empty(std::move(id), s);
    r.at(s, f) = v;
    return r;
  };
  std::vector<ingest::BlockGroupRecord> recs{
      rec("A", std::nullopt), rec("B", 300000), rec("C", 400000), rec("E", 250000),
      rec("F", std::nullopt), rec("G", std::nullopt), rec("H", 500000),
      rec("X", std::nullopt), rec("Y", std::nullopt), rec("Z", std::nullopt), rec("W", std::nullopt)};
  ingest::AdjacencyGraph g{{"A", {"B", "C"}}, {"B", {"A", "E"}}, {"C", {"A"}}, {"E", {"B"}},
                           {"F", {"G"}},      {"G", {"F", "H"}}, {"H", {"G"}},
                           {"X", {"Y", "Z"}}, {"Y", {"X", "Z"}}, {"Z", {"X", "Y"}}, {"W", {}}};
  const std::vector<std::string> features{f};
  const auto r = ingest::impute_adjacent_mean(recs, g, features, s);
  auto value = [&](const std::vector<ingest::BlockGroupRecord>& rs, const std::string& id) {
    for (const auto& x : rs) {
      if (x.geoid == id) return x.at(s, f);
    }
    throw std::logic_error("missing id");
  };
  CHECK(*value(r.records, "A") == 350000);
  CHECK(*value(r.records, "E") == 250000);
  CHECK(*value(r.records, "G") == 500000);
  // F only sees G, which was itself null before the first pass.
  CHECK(*value(r.records, "F") == 500000);
  CHECK(r.filled == 3);
  CHECK(r.passes >= 2);
  for (const char* id : {"X", "Y", "Z", "W"}) CHECK_FALSE(value(r.records, id).has_value());
  CHECK(r.unresolved.size() == 4);

  const auto again = ingest::impute_adjacent_mean(r.records, g, features, s);
  CHECK(again.filled == 0);
  CHECK(ingest::feature_table_csv(again.records, s) == ingest::feature_table_csv(r.records, s));

  ingest::AdjacencyGraph asym{{"A", {"B"}}, {"B", {}}};
  CHECK_THROWS(ingest::validate_graph(asym));
}

TEST_CASE("rook adjacency from polygons") {
  const std::vector<std::pair<std::string, geo::Polygon>> units{
      {"a", box_polygon(0, 0, 1, 1)}, {"b", box_polygon(1, 0, 2, 1)}, {"c", box_polygon(2, 1, 3, 2)}};
  const auto g = ingest::rook_adjacency(units);
  CHECK(g.at("a") == std::set<std::string>{"b"});
  CHECK(g.at("b") == std::set<std::string>{"a"});
  CHECK(g.at("c").empty());
}

TEST_CASE("schema validation flags exactly the planted violations") {
  const auto& s = schema();
  CHECK(s.size() == 43);
  auto records = synth::generate_feature_table(200, 0.2, 17);
  CHECK(ingest::validate_schema(records, s).total_violations() == 0);
  records[3].at(s, "% Renters") = 1.2;
  records[50].at(s, "Median Age") = 84.6;  // boundary value passes
  records[60].at(s, "Median Age") = 84.7;
  records[61].pv_to_roof_ratio = -0.01;
  const auto report = ingest::validate_schema(records, s);
  CHECK(report.total_violations() == 3);
  for (const auto& f : report.features) {
    if (f.name == "% Renters") CHECK(f.offending_geoids == std::vector<std::string>{records[3].geoid});
    if (f.name == "Median Age") CHECK(f.offending_geoids == std::vector<std::string>{records[60].geoid});
  }
  const std::string csv = report.to_csv();
  CHECK(csv.find("% Renters") != std::string::npos);
}

TEST_CASE("feature table CSV round trip keeps nulls") {
  const auto& s = schema();
  const auto records = synth::generate_feature_table(30, 0.3, 5);
  const std::string csv = ingest::feature_table_csv(records, s);
  std::istringstream in(csv);
  const auto back = ingest::parse_feature_table(in, s);
  CHECK(ingest::feature_table_csv(back, s) == csv);
}

TEST_CASE("full join on a two block-group fixture") {
  const auto& s = schema();
  ingest::JoinInputs in;
  in.block_groups = {{"080310041021", box_polygon(W, S, W + D, S + D)},
                     {"080310041022", box_polygon(W + D, S, W + 2 * D, S + D)},
                     {"080310041023", box_polygon(W + 5, S, W + 5 + D, S + D)}};
  auto base = ingest::BlockGroupRecord::empty("080310041021", s);
  base.at(s, "Median Home Value") = 300000;
  in.base = {base};
  OverlayLayer jur{"jurisdictions", {feature("denver", box_polygon(W - 1, S - 1, W + 1.5 * D, S + 1))}};
  jur.features[0].payload["Net Metering"] = 1.0;
  in.jurisdictions = jur;
  OverlayLayer zips{"zips", {feature("80202", box_polygon(W - 1, S - 1, W + 1, S + 1), 100.0)}};
  zips.features[0].payload["Resident. Elec. Rate"] = 0.12;
  in.zips = zips;
  in.tracts = {{"08031004102", {{"Hail Risk", 20.0}}}};
  const auto out = ingest::join_features(in, s);
  REQUIRE(out.records.size() == 3);
  CHECK(*out.records[0].at(s, "Net Metering") == 1.0);
  CHECK(*out.records[1].at(s, "Net Metering") == 1.0);  // 50% share, the only candidate
  CHECK_FALSE(out.records[2].at(s, "Net Metering").has_value());
  CHECK(*out.records[1].at(s, "Median Home Value") == 300000);  // imputed from its neighbour
  CHECK(*out.records[2].at(s, "Hail Risk") == 20.0);
  CHECK_FALSE(out.flags.empty());
}

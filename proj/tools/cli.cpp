#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "solarmap/deploy.hpp"
#include "solarmap/detect.hpp"
#include "solarmap/detect_io.hpp"
#include "solarmap/explain.hpp"
#include "solarmap/geo.hpp"
#include "solarmap/geojson.hpp"
#include "solarmap/ingest.hpp"
#include "solarmap/learn.hpp"
#include "solarmap/synth.hpp"
#include "solarmap/table_io.hpp"
#include "solarmap/tile_fetch.hpp"

namespace solarmap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config -----------------------------------------------------------------

namespace {

template <class T>
void take(const json& section, const char* key, T& target, std::set<std::string>& seen) {
  if (!section.contains(key)) return;
  seen.insert(key);
  try {
    target = section.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(fmt::format("cli: config key '{}' has the wrong type", key));
  }
}

void reject_unknown(const json& section, const std::set<std::string>& seen, std::string_view where) {
  for (const auto& [key, _] : section.items()) {
    if (!seen.contains(key)) throw ValidationError(fmt::format("cli: unknown config key '{}{}'", where, key));
  }
}

json section_of(const json& doc, const char* key, std::set<std::string>& seen) {
  if (!doc.contains(key)) return json::object();
  seen.insert(key);
  if (!doc.at(key).is_object()) throw ValidationError(fmt::format("cli: config section '{}' must be an object", key));
  return doc.at(key);
}

void check_config(const RunConfig& c) {
  auto fail = [](std::string_view what) { throw ValidationError(fmt::format("cli: config {}", what)); };
  if (c.threads < 0) fail("threads must be non-negative");
  if (c.zoom < 0 || c.zoom > 30) fail("zoom must lie in [0, 30]");
  if (c.width_px < 1 || c.height_px < 1) fail("image size must be positive");
  if (!(c.nms_roof > 0.0 && c.nms_roof <= 1.0) || !(c.nms_pv > 0.0 && c.nms_pv <= 1.0)) {
    fail("NMS thresholds must lie in (0, 1]");
  }
  if (!(c.fetch_rate > 0.0) || !(c.fetch_burst >= 1.0) || c.fetch_max_attempts < 1) fail("fetch limits invalid");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (c.top_k < 0 || c.ame_points < 1) fail("explain options invalid");
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("cli: config must be a JSON object");
  RunConfig c;
  std::set<std::string> top;
  take(doc, "seed", c.seed, top);
  take(doc, "threads", c.threads, top);

  std::set<std::string> seen;
  const json geo = section_of(doc, "geo", top);
  take(geo, "zoom", c.zoom, seen);
  take(geo, "width_px", c.width_px, seen);
  take(geo, "height_px", c.height_px, seen);
  reject_unknown(geo, seen, "geo.");

  seen.clear();
  const json nms = section_of(doc, "nms", top);
  take(nms, "roof", c.nms_roof, seen);
  take(nms, "pv", c.nms_pv, seen);
  reject_unknown(nms, seen, "nms.");

  seen.clear();
  const json fetch = section_of(doc, "fetch", top);
  take(fetch, "endpoint", c.fetch_endpoint, seen);
  take(fetch, "cache_dir", c.fetch_cache_dir, seen);
  take(fetch, "rate_per_second", c.fetch_rate, seen);
  take(fetch, "burst", c.fetch_burst, seen);
  take(fetch, "max_attempts", c.fetch_max_attempts, seen);
  take(fetch, "credential_env", c.credential_env, seen);
  reject_unknown(fetch, seen, "fetch.");

  seen.clear();
  const json learn = section_of(doc, "learn", top);
  take(learn, "train_fraction", c.train_fraction, seen);
  take(learn, "split_seed", c.split_seed, seen);
  reject_unknown(learn, seen, "learn.");

  seen.clear();
  const json expl = section_of(doc, "explain", top);
  take(expl, "top_k", c.top_k, seen);
  take(expl, "ame_points", c.ame_points, seen);
  reject_unknown(expl, seen, "explain.");

  reject_unknown(doc, top, "");
  check_config(c);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError(fmt::format("cli: config file {} not found", path.string()));
  try {
    return from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("cli: config {} is not valid JSON: {}", path.string(), e.what()));
  }
}

json RunConfig::to_json() const {
  return json{{"seed", seed},
              {"threads", threads},
              {"geo", {{"zoom", zoom}, {"width_px", width_px}, {"height_px", height_px}}},
              {"nms", {{"roof", nms_roof}, {"pv", nms_pv}}},
              {"fetch",
               {{"endpoint", fetch_endpoint},
                {"cache_dir", fetch_cache_dir},
                {"rate_per_second", fetch_rate},
                {"burst", fetch_burst},
                {"max_attempts", fetch_max_attempts},
                {"credential_env", credential_env}}},
              {"learn", {{"train_fraction", train_fraction}, {"split_seed", split_seed}}},
              {"explain", {{"top_k", top_k}, {"ame_points", ame_points}}}};
}

// ---- helpers ----------------------------------------------------------------

namespace {

void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw ValidationError(fmt::format("cli: {} path required", what));
  if (!fs::exists(p)) throw ValidationError(fmt::format("cli: {} {} not found", what, p.string()));
}

void write_output(const fs::path& p, std::string_view contents) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  io::write_file_atomic(p, contents);
}

std::string seed_header(std::string_view what, std::uint64_t seed) { return fmt::format("# {} seed={}\n", what, seed); }

template <class Fn>
std::string to_string_via(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

// A dataset comes either from a plain CSV plus target column, or from a
// joined feature table plus one of the four dataset tags.
struct DataSource {
  std::string data;
  std::string target;
  std::string features;
  std::string dataset;

  void add(CLI::App* app) {
    app->add_option("--data", data, "CSV with numeric feature columns and a target");
    app->add_option("--target", target, "Target column of --data");
    app->add_option("--features", features, "Joined block-group feature table");
    app->add_option("--dataset", dataset, "pv_count, pv_count+policy, pv_ratio or pv_ratio+policy");
  }

  learn::Dataset load() const {
    if (!data.empty()) {
      require_file(data, "data file");
      if (target.empty()) throw ValidationError("cli: --target is required with --data");
      try {
        return learn::read_dataset_csv(data, target, learn::DatasetTag::Synthetic);
      } catch (const std::out_of_range& e) {
        throw ValidationError(fmt::format("cli: {}", e.what()));
      }
    }
    if (!features.empty()) {
      require_file(features, "feature table");
      if (dataset.empty()) throw ValidationError("cli: --dataset is required with --features");
      const auto& schema = ingest::FeatureSchema::standard();
      const auto records = ingest::read_feature_table(features, schema);
      return learn::assemble_dataset(records, schema, learn::parse_dataset_tag(dataset)).dataset;
    }
    throw ValidationError("cli: give --data/--target or --features/--dataset");
  }
};

// ---- plan-tiles -------------------------------------------------------------

struct PlanOpts {
  std::string blocks;
  std::string out;
};

int cmd_plan(const PlanOpts& o, const RunConfig& cfg, std::ostream& out) {
  require_file(o.blocks, "block geojson");
  const auto units = geo::read_block_units(o.blocks);
  const auto populated = geo::select_populated(units);
  std::string csv = "geoid,row,col,lat,lon,zoom,width_px,height_px,gsd_m_per_px\n";
  std::size_t images = 0;
  for (const auto& unit : populated) {
    const auto plan = geo::plan_tiles(unit, cfg.zoom, cfg.width_px, cfg.height_px);
    for (std::size_t i = 0; i < plan.footprints.size(); ++i) {
      const auto& fp = plan.footprints[i];
      csv += io::csv_line({unit.geoid, std::to_string(plan.grid_index[i].first),
                           std::to_string(plan.grid_index[i].second), io::format_number(fp.center.lat),
                           io::format_number(fp.center.lon), std::to_string(fp.zoom), std::to_string(fp.width_px),
                           std::to_string(fp.height_px), io::format_number(fp.gsd_m_per_px)});
    }
    images += plan.footprints.size();
  }
  write_output(o.out, csv);
  out << fmt::format("planned {} images over {} populated of {} units\n", images, populated.size(), units.size());
  return kExitOk;
}

// ---- fetch-tiles ------------------------------------------------------------

struct FetchOpts {
  std::string plan;
  std::string manifest;
  std::string fixtures;
  bool offline = false;
};

int cmd_fetch(const FetchOpts& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_file(o.plan, "tile plan");
  ingest::TileFetchConfig fc;
  fc.endpoint_template = cfg.fetch_endpoint;
  fc.cache_dir = cfg.fetch_cache_dir;
  fc.rate_per_second = cfg.fetch_rate;
  fc.burst = cfg.fetch_burst;
  fc.retry.max_attempts = cfg.fetch_max_attempts;
  fc.offline = o.offline;
  fc.fixture_dir = o.fixtures;
  fc.credential_env = cfg.credential_env;
  try {
    fc.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  fs::create_directories(fc.cache_dir);
  ingest::TileFetcher fetcher(fc);

  const auto table = io::read_csv(o.plan);
  const auto c_geoid = table.column("geoid");
  const auto c_row = table.column("row");
  const auto c_col = table.column("col");
  const auto c_lat = table.column("lat");
  const auto c_lon = table.column("lon");
  const auto c_zoom = table.column("zoom");
  const auto c_w = table.column("width_px");
  const auto c_h = table.column("height_px");
  // Manifest columns avoid cache state so a re-run writes the same bytes.
  std::string manifest = "geoid,row,col,cache_key,bytes,url,status\n";
  std::size_t failures = 0;
  for (const auto& row : table.rows) {
    const auto fp = geo::make_footprint({io::parse_number(row[c_lon]), io::parse_number(row[c_lat])},
                                        std::stoi(row[c_zoom]), std::stoi(row[c_w]), std::stoi(row[c_h]));
    std::vector<std::string> fields{row[c_geoid], row[c_row], row[c_col]};
    try {
      const auto tile = fetcher.fetch(fp);
      fields.insert(fields.end(), {tile.provenance.cache_key, std::to_string(tile.provenance.bytes),
                                   tile.provenance.url, "ok"});
      err << fmt::format("{} {}\n", tile.provenance.cache_key, ingest::to_string(tile.provenance.source));
    } catch (const ingest::FetchError& e) {
      ++failures;
      fields.insert(fields.end(), {ingest::cache_key(fc.endpoint_template, fp), "0",
                                   ingest::expand_url(fc.endpoint_template, fp, "REDACTED"), e.what()});
      err << e.what() << '\n';
    }
    manifest += io::csv_line(fields);
  }
  write_output(o.manifest, manifest);
  out << fmt::format("fetched {} of {} tiles ({} network calls)\n", table.rows.size() - failures, table.rows.size(),
                     fetcher.network_calls());
  return failures == 0 ? kExitOk : kExitRuntime;
}

// ---- eval-detect ------------------------------------------------------------

struct EvalOpts {
  std::string detections;
  std::string ground_truth;
  std::string out;
  std::string text_out;
  bool coco_text = false;
  bool apply_nms = false;
};

int cmd_eval(const EvalOpts& o, const RunConfig& cfg, std::ostream& out) {
  require_file(o.detections, "detections");
  require_file(o.ground_truth, "ground truth");
  detect::Corpus corpus;
  corpus.detections = detect::read_detections(o.detections);
  corpus.ground_truth = detect::read_ground_truth(o.ground_truth);
  if (o.apply_nms) {
    const detect::NmsThresholds thr{cfg.nms_roof, cfg.nms_pv};
    for (auto& d : corpus.detections) d = detect::nms(d, thr);
  }
  const auto report = detect::eval_report(corpus);
  const auto summary = detect::format_coco_summary(report);
  if (!o.out.empty()) write_output(o.out, detect::eval_report_csv(report));
  if (!o.text_out.empty()) write_output(o.text_out, summary);
  if (o.coco_text) {
    out << summary;
  } else {
    const auto per_class = report.per_class_ap50();
    for (std::size_t k = 0; k < per_class.size(); ++k) {
      out << fmt::format("AP50[{}] = {:.4f}\n", detect::to_string(report.config.classes[k]), per_class[k]);
    }
    out << fmt::format("mAP50 = {:.4f}\n", report.map50());
  }
  return kExitOk;
}

// ---- aggregate --------------------------------------------------------------

struct AggregateOpts {
  std::string observations;
  std::string households;
  std::string out;
  bool apply_nms = false;
  double merge_eps = -1.0;
};

int cmd_aggregate(const AggregateOpts& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_file(o.observations, "observations");
  require_file(o.households, "households");
  auto obs = deploy::read_observations(o.observations);
  if (o.apply_nms) {
    const detect::NmsThresholds thr{cfg.nms_roof, cfg.nms_pv};
    for (auto& ob : obs) {
      detect::DetectionSet d{ob.image_id, {}};
      d.boxes = ob.roof_boxes;
      d.boxes.insert(d.boxes.end(), ob.pv_boxes.begin(), ob.pv_boxes.end());
      ob = deploy::make_observation(detect::nms(d, thr), ob.block_group_id, ob.gsd_m_per_px);
    }
  }
  deploy::CountingOptions counting;
  if (o.merge_eps >= 0.0) {
    counting.merge_adjacent = true;
    counting.merge_epsilon_px = o.merge_eps;
  }
  const auto result = deploy::rollup(obs, deploy::read_households(o.households), counting);
  for (const auto& e : result.errors) err << fmt::format("excluded {}: {}\n", e.block_group_id, e.message);
  write_output(o.out, deploy::deployment_csv(result.records));
  out << fmt::format("aggregated {} images into {} block groups ({} excluded)\n", obs.size(), result.records.size(),
                     result.errors.size());
  return kExitOk;
}

// ---- join-features ----------------------------------------------------------

struct JoinOpts {
  std::string block_groups;
  std::string base;
  std::string deployment;
  std::string jurisdictions;
  std::string utilities;
  std::string zips;
  std::string tracts;
  std::string id_property = "id";
  std::string population_property = "population";
  std::string out;
  std::string flags;
};

int cmd_join(const JoinOpts& o, std::ostream& out) {
  require_file(o.block_groups, "block-group geojson");
  const auto& schema = ingest::FeatureSchema::standard();
  ingest::JoinInputs in;
  for (const auto& f : geo::read_feature_collection(o.block_groups)) {
    if (!f.properties.contains("geoid")) throw ValidationError("cli: block-group feature without geoid");
    in.block_groups.emplace_back(f.properties.at("geoid").get<std::string>(), f.polygon);
  }
  if (!o.base.empty()) {
    require_file(o.base, "base feature table");
    in.base = ingest::read_feature_table(o.base, schema);
  }
  if (!o.deployment.empty()) {
    require_file(o.deployment, "deployment table");
    const auto table = io::read_csv(o.deployment);
    const auto g = table.column("geoid");
    const auto c = table.column("pv_count_per_hh");
    const auto r = table.column("pv_to_roof_ratio");
    for (const auto& row : table.rows) {
      auto rec = ingest::BlockGroupRecord::empty(row[g], schema);
      rec.pv_count_per_hh = io::parse_optional(row[c]);
      rec.pv_to_roof_ratio = io::parse_optional(row[r]);
      in.base.push_back(std::move(rec));
    }
  }
  auto layer = [&](const std::string& path, const char* name, bool population) -> std::optional<ingest::OverlayLayer> {
    if (path.empty()) return std::nullopt;
    require_file(path, name);
    return ingest::overlay_from_features(name, geo::read_feature_collection(path), o.id_property, schema,
                                         population ? std::string_view(o.population_property) : std::string_view{});
  };
  in.jurisdictions = layer(o.jurisdictions, "jurisdictions", false);
  in.utilities = layer(o.utilities, "utilities", false);
  in.zips = layer(o.zips, "zips", true);
  if (!o.tracts.empty()) {
    require_file(o.tracts, "tract table");
    in.tracts = ingest::read_tract_table(o.tracts, schema);
  }
  const auto result = ingest::join_features(in, schema);
  write_output(o.out, ingest::feature_table_csv(result.records, schema));
  if (!o.flags.empty()) {
    std::string csv = "geoid,stage,message\n";
    for (const auto& f : result.flags) csv += io::csv_line({f.geoid, f.stage, f.message});
    write_output(o.flags, csv);
  }
  out << fmt::format("joined {} block groups ({} flags)\n", result.records.size(), result.flags.size());
  return kExitOk;
}

// ---- validate ---------------------------------------------------------------

struct ValidateOpts {
  std::string features;
  std::string out;
};

int cmd_validate(const ValidateOpts& o, std::ostream& out) {
  require_file(o.features, "feature table");
  const auto& schema = ingest::FeatureSchema::standard();
  const auto records = ingest::read_feature_table(o.features, schema);
  const auto report = ingest::validate_schema(records, schema);
  if (!o.out.empty()) write_output(o.out, report.to_csv());
  out << fmt::format("{} rows, {} out-of-range values, {} nulls\n", records.size(), report.total_violations(),
                     report.total_nulls());
  for (const auto& f : report.features) {
    if (f.out_of_range > 0) out << fmt::format("  {}: {} out of range\n", f.name, f.out_of_range);
  }
  return report.total_violations() == 0 ? kExitOk : kExitValidation;
}

// ---- train ------------------------------------------------------------------

struct TrainOpts {
  DataSource source;
  std::string out_dir;
  std::vector<std::string> models;
  bool force = false;
  std::string family;
  std::string params = "{}";
};

json read_params(const std::string& text) {
  try {
    if (!text.empty() && text.front() != '{' && fs::exists(text)) return json::parse(io::read_file(text));
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("cli: learner parameters are not valid JSON: {}", e.what()));
  }
}

int cmd_train_single(const TrainOpts& o, const RunConfig& cfg, std::ostream& out) {
  const auto data = o.source.load();
  learn::LearnerConfig config;
  try {
    config = learn::config_from_params(o.family, read_params(o.params));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const std::vector<double> fractions{cfg.train_fraction, 1.0 - cfg.train_fraction};
  const auto parts = learn::split_dataset(data, fractions, cfg.split_seed);
  const auto model = learn::fit(parts[0], config, {cfg.threads});
  const auto train_m = learn::metrics(parts[0].y, model.predict(parts[0]));
  const auto test_m = learn::metrics(parts[1].y, model.predict(parts[1]));
  const fs::path dir = o.out_dir;
  write_output(dir / "model.json", learn::to_json(model).dump(1) + "\n");
  std::string csv = seed_header("split", cfg.split_seed) + "split,n,mae,rmse,r2\n";
  for (const auto& [name, m] : {std::pair{"train", train_m}, std::pair{"test", test_m}}) {
    csv += io::csv_line({name, std::to_string(m.n), io::format_number(m.mae), io::format_number(m.rmse),
                         io::format_optional(m.r2)});
  }
  write_output(dir / "metrics.csv", csv);
  out << fmt::format("test R2 = {}\n", io::format_optional(test_m.r2));
  return kExitOk;
}

int cmd_train(const TrainOpts& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (o.out_dir.empty()) throw ValidationError("cli: --out-dir required");
  if (!o.family.empty()) return cmd_train_single(o, cfg, out);
  require_file(o.source.features, "feature table");
  const auto& schema = ingest::FeatureSchema::standard();
  const auto records = ingest::read_feature_table(o.source.features, schema);
  const auto validation = ingest::validate_schema(records, schema);
  if (validation.total_violations() > 0) {
    if (!o.force) {
      throw ValidationError(fmt::format(
          "cli: feature table has {} out-of-range values; fix it or pass --force", validation.total_violations()));
    }
    err << fmt::format("warning: training despite {} out-of-range values\n", validation.total_violations());
  }

  std::map<learn::DatasetTag, learn::Dataset> datasets;
  for (auto tag : {learn::DatasetTag::PvCount, learn::DatasetTag::PvCountPolicy, learn::DatasetTag::PvRatio,
                   learn::DatasetTag::PvRatioPolicy}) {
    auto assembled = learn::assemble_dataset(records, schema, tag);
    if (!assembled.dropped.empty()) {
      err << fmt::format("{}: dropped {} incomplete rows\n", learn::to_string(tag), assembled.dropped.size());
    }
    datasets.emplace(tag, std::move(assembled.dataset));
  }
  auto cells = learn::appendix_b_grid();
  if (!o.models.empty()) {
    const std::set<std::string> wanted(o.models.begin(), o.models.end());
    std::erase_if(cells, [&](const learn::GridCell& c) { return !wanted.contains(c.model_id); });
    if (cells.empty()) throw ValidationError("cli: --models selected no grid cell");
  }
  learn::GridOptions options;
  options.fractions = {cfg.train_fraction, 1.0 - cfg.train_fraction};
  options.split_seed = cfg.split_seed;
  options.threads = cfg.threads;
  const auto rows = learn::run_experiment_grid(datasets, cells, options);

  const fs::path dir = o.out_dir;
  write_output(dir / "table1.csv", learn::table1_csv(rows));
  write_output(dir / "table1.txt", learn::table1_text(rows));
  write_output(dir / "grid_metrics.csv", seed_header("split", cfg.split_seed) + learn::grid_metrics_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.ensemble) {
      write_output(dir / "models" / (r.cell.model_id + ".json"), learn::to_json(*r.ensemble).dump(1) + "\n");
    } else {
      ++failed;
      err << fmt::format("{} failed: {}\n", r.cell.model_id, r.error);
    }
  }
  out << learn::table1_text(rows);
  return failed == 0 ? kExitOk : kExitRuntime;
}

// ---- explain ----------------------------------------------------------------

struct FisOpts {
  std::string grid_dir;
  std::string features;
  std::string out_dir;
};

learn::TreeEnsemble read_model(const fs::path& p) {
  require_file(p, "model");
  return learn::ensemble_from_json(json::parse(io::read_file(p)));
}

int cmd_fis(const FisOpts& o, std::ostream& out, std::ostream& err) {
  const fs::path grid = o.grid_dir;
  require_file(grid / "grid_metrics.csv", "grid metrics");
  if (o.out_dir.empty()) throw ValidationError("cli: --out-dir required");
  const auto table = io::read_csv(grid / "grid_metrics.csv");
  const auto c_model = table.column("model");
  const auto c_dataset = table.column("dataset");
  const auto c_split = table.column("split");
  const auto c_r2 = table.column("r2");
  std::map<std::string, std::vector<explain::ModelFis>> by_dataset;
  for (const auto& row : table.rows) {
    if (row[c_split] != "test") continue;
    const auto r2 = io::parse_optional(row[c_r2]);
    const fs::path model_path = grid / "models" / (row[c_model] + ".json");
    if (!r2 || !(*r2 > 0.0) || !fs::exists(model_path)) {
      err << fmt::format("{}: skipped (no positive held-out R2 or no model)\n", row[c_model]);
      continue;
    }
    by_dataset[row[c_dataset]].push_back(explain::model_fis(row[c_model], read_model(model_path), *r2));
  }
  std::vector<ingest::BlockGroupRecord> records;
  if (!o.features.empty()) {
    require_file(o.features, "feature table");
    records = ingest::read_feature_table(o.features, ingest::FeatureSchema::standard());
  }
  for (const auto& [dataset, models] : by_dataset) {
    const auto agg = explain::aggregate_fis(models);
    std::optional<learn::Dataset> data;
    if (!records.empty()) {
      data = learn::assemble_dataset(records, ingest::FeatureSchema::standard(), learn::parse_dataset_tag(dataset))
                 .dataset;
    }
    write_output(fs::path(o.out_dir) / fmt::format("fis_{}.csv", dataset), explain::fis_csv(agg, data ? &*data : nullptr));
    out << fmt::format("{}: top feature {} ({} models)\n", dataset, agg.rows.front().feature, models.size());
  }
  return kExitOk;
}

struct ShapOpts {
  DataSource source;
  std::string model;
  std::string out;
  std::string summary;
  std::size_t limit = 0;
};

int cmd_shap(const ShapOpts& o, const RunConfig& cfg, std::ostream& out) {
  const auto model = read_model(o.model);
  auto data = o.source.load();
  if (o.limit > 0 && o.limit < data.rows()) {
    std::vector<std::size_t> idx(o.limit);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    data = data.subset(idx);
  }
  // Reorder columns to the model layout so phi lines up with data.names.
  std::vector<std::size_t> cols;
  for (const auto& name : model.feature_names) {
    const auto c = data.find(name);
    if (!c) throw ValidationError(fmt::format("cli: data lacks model feature '{}'", name));
    cols.push_back(*c);
  }
  learn::Dataset aligned;
  aligned.names = model.feature_names;
  aligned.y = data.y;
  aligned.ids = data.ids;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t c : cols) aligned.x.push_back(data.at(i, c));
  }
  const auto expl = explain::explain_dataset(model, aligned, cfg.threads);
  if (!o.out.empty()) write_output(o.out, explain::shap_csv(expl, aligned));
  const auto summary = explain::shap_summary(expl, aligned, static_cast<std::size_t>(cfg.top_k));
  if (!o.summary.empty()) write_output(o.summary, explain::shap_summary_csv(summary));
  for (std::size_t r = 0; r < std::min<std::size_t>(5, summary.features.size()); ++r) {
    out << fmt::format("{}. {} {:.6g}\n", r + 1, summary.features[r].name, summary.features[r].mean_abs_phi);
  }
  return kExitOk;
}

// ---- ols / ame --------------------------------------------------------------

struct OlsOpts {
  DataSource source;
  std::vector<std::string> terms;
  bool no_intercept = false;
  std::string name = "Model";
  std::string out;
  std::string text_out;
  std::string focal;
  std::string moderator;
};

explain::LinearModelSpec spec_from(const OlsOpts& o) {
  if (o.terms.empty()) throw ValidationError("cli: at least one --term required");
  explain::LinearModelSpec spec;
  spec.intercept = !o.no_intercept;
  for (const auto& t : o.terms) spec.terms.push_back(explain::parse_term(t));
  return spec;
}

int cmd_ols(const OlsOpts& o, std::ostream& out) {
  const auto data = o.source.load();
  const auto fit = explain::ols_fit(data, spec_from(o));
  const std::vector<explain::OLSFit> fits{fit};
  const std::vector<std::string> names{o.name};
  if (!o.out.empty()) write_output(o.out, explain::ols_table_csv(fits, names));
  const auto text = explain::ols_table_text(fits, names);
  if (!o.text_out.empty()) write_output(o.text_out, text);
  out << text;
  return kExitOk;
}

int cmd_ame(const OlsOpts& o, const RunConfig& cfg, std::ostream& out) {
  if (o.focal.empty() || o.moderator.empty()) throw ValidationError("cli: --focal and --moderator required");
  const auto data = o.source.load();
  const auto fit = explain::ols_fit(data, spec_from(o));
  const auto grid = explain::moderator_grid(data, o.moderator, static_cast<std::size_t>(cfg.ame_points));
  const auto report = explain::ame(fit, data, o.focal, o.moderator, grid);
  const auto csv = explain::ame_csv(report);
  if (!o.out.empty()) write_output(o.out, csv);
  else out << csv;
  return kExitOk;
}

// ---- synth ------------------------------------------------------------------

struct SceneOpts {
  std::string out_dir;
  synth::SceneSpec spec;
  std::string detector = "perfect";
  synth::DetectorModel model;
};

int cmd_synth_scene(SceneOpts o, const RunConfig& cfg, std::ostream& out) {
  if (o.out_dir.empty()) throw ValidationError("cli: --out-dir required");
  o.spec.seed = cfg.seed;
  if (o.detector == "perfect") o.model.mode = synth::DetectorModel::Mode::Perfect;
  else if (o.detector == "noisy") o.model.mode = synth::DetectorModel::Mode::Noisy;
  else throw ValidationError(fmt::format("cli: unknown detector '{}'", o.detector));
  o.model.seed = learn::derive_seed(cfg.seed, 7);
  try {
    o.spec.validate();
    o.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto scene = synth::generate_scene(o.spec);
  const auto dets = synth::render_detections(scene, o.model);
  const auto obs = synth::observations(scene, dets);
  const fs::path dir = o.out_dir;
  write_output(dir / "ground_truth.jsonl", to_string_via([&](std::ostream& s) {
                 detect::write_ground_truth(s, scene.ground_truth());
               }));
  write_output(dir / "detections.jsonl",
               to_string_via([&](std::ostream& s) { detect::write_detections(s, dets); }));
  write_output(dir / "observations.jsonl",
               to_string_via([&](std::ostream& s) { deploy::write_observations(s, obs); }));
  std::string hh = "geoid,households\n";
  for (const auto& [g, n] : scene.households()) hh += io::csv_line({g, std::to_string(n)});
  write_output(dir / "households.csv", hh);
  write_output(dir / "truth.csv", synth::truth_csv(scene.truth));
  const json manifest{{"seed", cfg.seed},
                      {"block_groups", o.spec.block_groups},
                      {"images_per_block_group", o.spec.images_per_block_group},
                      {"adoption_probability", o.spec.adoption_probability},
                      {"coverage", {o.spec.coverage.lo, o.spec.coverage.hi}},
                      {"gsd_m_per_px", o.spec.gsd_m_per_px},
                      {"detector", o.detector},
                      {"images", scene.images.size()}};
  write_output(dir / "manifest.json", manifest.dump(1) + "\n");
  out << fmt::format("{} images over {} block groups\n", scene.images.size(), scene.truth.size());
  return kExitOk;
}

struct RegressionOpts {
  std::string kind = "friedman";
  std::size_t n = 2000;
  double noise = 1.0;
  std::string out;
  std::string truth_out;
};

int cmd_synth_regression(const RegressionOpts& o, const RunConfig& cfg, std::ostream& out) {
  if (o.out.empty()) throw ValidationError("cli: --out required");
  synth::SynthRegression r;
  if (o.kind == "friedman") {
    r = synth::generate_friedman(o.n, 10, o.noise, cfg.seed);
  } else if (o.kind == "linear") {
    r = synth::generate_linear(o.n, {3.0, 1.0, 0.0}, 0.5, o.noise, cfg.seed);
  } else if (o.kind == "income-race") {
    synth::IncomeRaceSpec spec;
    spec.n = o.n;
    spec.noise_sd = o.noise;
    spec.seed = cfg.seed;
    r = synth::generate_income_race(spec);
  } else {
    throw ValidationError(fmt::format("cli: unknown regression kind '{}'", o.kind));
  }
  std::vector<std::string> header = r.data.names;
  header.push_back("y");
  std::string csv = seed_header(o.kind, cfg.seed) + io::csv_line(header);
  for (std::size_t i = 0; i < r.data.rows(); ++i) {
    std::vector<std::string> row;
    for (double v : r.data.row(i)) row.push_back(io::format_number(v));
    row.push_back(io::format_number(r.data.y[i]));
    csv += io::csv_line(row);
  }
  write_output(o.out, csv);
  if (!o.truth_out.empty()) {
    json truth = json::object();
    for (const auto& c : r.coefficients) truth[c.term] = c.value;
    write_output(o.truth_out, json{{"seed", cfg.seed}, {"noise_sd", r.noise_sd}, {"coefficients", truth}}.dump(1) + "\n");
  }
  out << fmt::format("{} rows of {} data\n", r.data.rows(), o.kind);
  return kExitOk;
}

struct FeatureSynthOpts {
  std::size_t n = 500;
  double unincorporated = 0.2;
  std::string out;
};

int cmd_synth_features(const FeatureSynthOpts& o, const RunConfig& cfg, std::ostream& out) {
  if (o.out.empty()) throw ValidationError("cli: --out required");
  const auto& schema = ingest::FeatureSchema::standard();
  const auto records = synth::generate_feature_table(o.n, o.unincorporated, cfg.seed);
  write_output(o.out, seed_header("features", cfg.seed) + ingest::feature_table_csv(records, schema));
  out << fmt::format("{} synthetic block groups\n", records.size());
  return kExitOk;
}

// ---- report -----------------------------------------------------------------

struct ReportOpts {
  bool table1 = false;
  bool table_a1 = false;
  bool text = false;
  std::string grid_dir;
  std::string features;
  std::string out;
};

std::vector<learn::GridRow> read_grid_rows(const fs::path& grid_metrics) {
  const auto table = io::read_csv(grid_metrics);
  const auto c_model = table.column("model");
  const auto c_dataset = table.column("dataset");
  const auto c_alg = table.column("algorithm");
  const auto c_split = table.column("split");
  const auto c_n = table.column("n");
  const auto c_mae = table.column("mae");
  const auto c_rmse = table.column("rmse");
  const auto c_r2 = table.column("r2");
  std::vector<learn::GridRow> rows;
  for (const auto& row : table.rows) {
    if (row[c_split] != "test") continue;
    learn::GridRow g;
    g.cell.model_id = row[c_model];
    g.cell.dataset = learn::parse_dataset_tag(row[c_dataset]);
    g.cell.algorithm = row[c_alg];
    const auto mae = io::parse_optional(row[c_mae]);
    const auto rmse = io::parse_optional(row[c_rmse]);
    if (mae && rmse) {
      g.test = learn::MetricsReport{*mae, *rmse, io::parse_optional(row[c_r2]),
                                    static_cast<std::size_t>(std::stoull(row[c_n]))};
    }
    rows.push_back(std::move(g));
  }
  return rows;
}

std::string table_a1(const std::vector<ingest::BlockGroupRecord>& records) {
  const auto& schema = ingest::FeatureSchema::standard();
  std::string csv = "Feature,Unit,N,Mean,SD,Min,Max\n";
  auto row_for = [&](const std::string& name, const std::string& unit, auto getter) {
    std::vector<double> v;
    for (const auto& r : records) {
      if (const auto x = getter(r)) v.push_back(*x);
    }
    if (v.empty()) {
      csv += io::csv_line({name, unit, "0", "NA", "NA", "NA", "NA"});
      return;
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    csv += io::csv_line({name, unit, std::to_string(v.size()), io::format_number(mean), io::format_number(sd),
                         io::format_number(*lo), io::format_number(*hi)});
  };
  row_for(std::string(ingest::kTargetPvCount), schema.target(ingest::kTargetPvCount).unit,
          [](const ingest::BlockGroupRecord& r) { return r.pv_count_per_hh; });
  row_for(std::string(ingest::kTargetPvRatio), schema.target(ingest::kTargetPvRatio).unit,
          [](const ingest::BlockGroupRecord& r) { return r.pv_to_roof_ratio; });
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema.features()[j];
    row_for(f.name, f.unit, [j](const ingest::BlockGroupRecord& r) { return r.values[j]; });
  }
  return csv;
}

int cmd_report(const ReportOpts& o, std::ostream& out) {
  if (o.table1 == o.table_a1) throw ValidationError("cli: choose exactly one of --table1 and --table-a1");
  std::string result;
  if (o.table1) {
    const fs::path metrics = fs::path(o.grid_dir) / "grid_metrics.csv";
    require_file(metrics, "grid metrics");
    const auto rows = read_grid_rows(metrics);
    result = o.text ? learn::table1_text(rows) : learn::table1_csv(rows);
  } else {
    require_file(o.features, "feature table");
    result = table_a1(ingest::read_feature_table(o.features, ingest::FeatureSchema::standard()));
  }
  if (o.out.empty()) out << result;
  else write_output(o.out, result);
  return kExitOk;
}

std::string config_path_from(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].starts_with("--config=")) return args[i].substr(9);
  }
  return {};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    if (const auto path = config_path_from(args); !path.empty()) cfg = RunConfig::load(path);
  } catch (const ValidationError& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitValidation;
  }

  CLI::App app{"Rooftop solar mapping and prediction pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", cfg.seed, "Random seed");
  app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)");

  PlanOpts plan;
  auto* plan_cmd = app.add_subcommand("plan-tiles", "Cover populated census blocks with image footprints");
  plan_cmd->add_option("--blocks", plan.blocks, "Block polygons (GeoJSON, geoid + population)")->required();
  plan_cmd->add_option("--out", plan.out, "Tile plan CSV")->required();
  plan_cmd->add_option("--zoom", cfg.zoom, "Web Mercator zoom");
  plan_cmd->add_option("--width", cfg.width_px, "Image width in pixels");
  plan_cmd->add_option("--height", cfg.height_px, "Image height in pixels");

  FetchOpts fetch;
  auto* fetch_cmd = app.add_subcommand("fetch-tiles", "Download planned images through the tile cache");
  fetch_cmd->add_option("--plan", fetch.plan, "Tile plan CSV")->required();
  fetch_cmd->add_option("--manifest", fetch.manifest, "Manifest CSV to write")->required();
  fetch_cmd->add_option("--cache", cfg.fetch_cache_dir, "Cache directory");
  fetch_cmd->add_option("--endpoint", cfg.fetch_endpoint, "URL template");
  fetch_cmd->add_option("--rate", cfg.fetch_rate, "Requests per second");
  fetch_cmd->add_option("--max-attempts", cfg.fetch_max_attempts, "Attempts per tile");
  fetch_cmd->add_flag("--offline", fetch.offline, "Serve from cache and fixtures only");
  fetch_cmd->add_option("--fixtures", fetch.fixtures, "Fixture directory for offline mode");

  EvalOpts eval;
  auto* eval_cmd = app.add_subcommand("eval-detect", "Evaluate detections against ground truth");
  eval_cmd->add_option("--detections", eval.detections, "Detections JSON lines")->required();
  eval_cmd->add_option("--ground-truth", eval.ground_truth, "Ground truth JSON lines")->required();
  eval_cmd->add_option("--out", eval.out, "Per-cell CSV");
  eval_cmd->add_option("--text-out", eval.text_out, "Write the summary block to a file");
  eval_cmd->add_flag("--coco-text", eval.coco_text, "Print the twelve-line summary block");
  eval_cmd->add_flag("--apply-nms", eval.apply_nms, "Run class-specific NMS first");
  eval_cmd->add_option("--nms-roof", cfg.nms_roof, "Roof NMS IoU threshold");
  eval_cmd->add_option("--nms-pv", cfg.nms_pv, "PV NMS IoU threshold");

  AggregateOpts agg;
  auto* agg_cmd = app.add_subcommand("aggregate", "Roll image detections up to block-group deployment");
  agg_cmd->add_option("--observations", agg.observations, "Observation JSON lines")->required();
  agg_cmd->add_option("--households", agg.households, "CSV geoid,households")->required();
  agg_cmd->add_option("--out", agg.out, "Deployment CSV")->required();
  agg_cmd->add_flag("--apply-nms", agg.apply_nms, "Run class-specific NMS first");
  agg_cmd->add_option("--nms-roof", cfg.nms_roof, "Roof NMS IoU threshold");
  agg_cmd->add_option("--nms-pv", cfg.nms_pv, "PV NMS IoU threshold");
  agg_cmd->add_option("--merge-adjacent", agg.merge_eps, "Merge touching PV boxes grown by this many pixels");

  JoinOpts join;
  auto* join_cmd = app.add_subcommand("join-features", "Assemble the block-group feature table");
  join_cmd->add_option("--block-groups", join.block_groups, "Block-group polygons (GeoJSON with geoid)")->required();
  join_cmd->add_option("--base", join.base, "Block-group level feature CSV");
  join_cmd->add_option("--deployment", join.deployment, "Deployment CSV supplying the targets");
  join_cmd->add_option("--jurisdictions", join.jurisdictions, "Jurisdiction polygons with policy properties");
  join_cmd->add_option("--utilities", join.utilities, "Utility territories");
  join_cmd->add_option("--zips", join.zips, "Zip polygons with rates and population");
  join_cmd->add_option("--tracts", join.tracts, "Tract-level CSV");
  join_cmd->add_option("--id-property", join.id_property, "Overlay id property");
  join_cmd->add_option("--population-property", join.population_property, "Zip population property");
  join_cmd->add_option("--out", join.out, "Feature table CSV")->required();
  join_cmd->add_option("--flags", join.flags, "CSV of join warnings");

  ValidateOpts val;
  auto* val_cmd = app.add_subcommand("validate", "Check a feature table against the published ranges");
  val_cmd->add_option("--features", val.features, "Feature table CSV")->required();
  val_cmd->add_option("--out", val.out, "Validation report CSV");

  TrainOpts train;
  auto* train_cmd = app.add_subcommand("train", "Train the sixteen-model grid or a single learner");
  train_cmd->add_option("--features", train.source.features, "Feature table CSV (grid mode)");
  train_cmd->add_option("--data", train.source.data, "Plain CSV (single-model mode)");
  train_cmd->add_option("--target", train.source.target, "Target column of --data");
  train_cmd->add_option("--dataset", train.source.dataset, "Dataset tag with --features in single-model mode");
  train_cmd->add_option("--family", train.family, "xgboost, catboost, lightgbm or random_forest");
  train_cmd->add_option("--params", train.params, "Hyperparameters as JSON text or a JSON file");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--models", train.models, "Subset of grid model ids")->delimiter(',');
  train_cmd->add_option("--train-fraction", cfg.train_fraction, "Training share of rows");
  train_cmd->add_option("--split-seed", cfg.split_seed, "Seed of the train/test split");
  train_cmd->add_flag("--force", train.force, "Train even when validation fails");

  auto* explain_cmd = app.add_subcommand("explain", "Feature importance and SHAP values");
  explain_cmd->require_subcommand(1);
  FisOpts fis;
  auto* fis_cmd = explain_cmd->add_subcommand("fis", "R2-weighted aggregate of standardized split gains");
  fis_cmd->add_option("--grid-dir", fis.grid_dir, "Output directory of train")->required();
  fis_cmd->add_option("--features", fis.features, "Feature table for target correlations");
  fis_cmd->add_option("--out-dir", fis.out_dir, "Where fis_<dataset>.csv files go")->required();
  ShapOpts shap;
  auto* shap_cmd = explain_cmd->add_subcommand("shap", "TreeSHAP values for every row");
  shap.source.add(shap_cmd);
  shap_cmd->add_option("--model", shap.model, "Model JSON")->required();
  shap_cmd->add_option("--out", shap.out, "Long-format SHAP CSV");
  shap_cmd->add_option("--summary", shap.summary, "Mean |phi| ranking CSV");
  shap_cmd->add_option("--limit", shap.limit, "Explain only the first N rows");
  shap_cmd->add_option("--top-k", cfg.top_k, "Features kept in the ranking");

  OlsOpts ols;
  auto* ols_cmd = app.add_subcommand("ols", "Linear regression with robust standard errors");
  ols.source.add(ols_cmd);
  ols_cmd->add_option("--term", ols.terms, "Model term: x, x^2 or x*y (repeatable)");
  ols_cmd->add_flag("--no-intercept", ols.no_intercept, "Drop the intercept");
  ols_cmd->add_option("--name", ols.name, "Model column label");
  ols_cmd->add_option("--out", ols.out, "Coefficient CSV");
  ols_cmd->add_option("--text-out", ols.text_out, "Fixed-width table");

  OlsOpts ame;
  auto* ame_cmd = app.add_subcommand("ame", "Average marginal effects across a moderator grid");
  ame.source.add(ame_cmd);
  ame_cmd->add_option("--term", ame.terms, "Model term: x, x^2 or x*y (repeatable)");
  ame_cmd->add_flag("--no-intercept", ame.no_intercept, "Drop the intercept");
  ame_cmd->add_option("--focal", ame.focal, "Feature to differentiate by")->required();
  ame_cmd->add_option("--moderator", ame.moderator, "Feature fixed at grid values")->required();
  ame_cmd->add_option("--points", cfg.ame_points, "Grid size");
  ame_cmd->add_option("--out", ame.out, "AME CSV");

  auto* synth_cmd = app.add_subcommand("synth", "Synthetic scenes and datasets");
  synth_cmd->require_subcommand(1);
  SceneOpts scene;
  auto* scene_cmd = synth_cmd->add_subcommand("scene", "Rooftop scene with detections");
  scene_cmd->add_option("--out-dir", scene.out_dir, "Output directory")->required();
  scene_cmd->add_option("--block-groups", scene.spec.block_groups, "Number of block groups");
  scene_cmd->add_option("--images", scene.spec.images_per_block_group, "Mean images per block group");
  scene_cmd->add_option("--adoption", scene.spec.adoption_probability, "Probability a roof carries PV");
  scene_cmd->add_option("--coverage-lo", scene.spec.coverage.lo, "Smallest PV/roof area ratio");
  scene_cmd->add_option("--coverage-hi", scene.spec.coverage.hi, "Largest PV/roof area ratio");
  scene_cmd->add_option("--detector", scene.detector, "perfect or noisy");
  scene_cmd->add_option("--jitter", scene.model.jitter_px, "Coordinate noise in pixels");
  scene_cmd->add_option("--drop", scene.model.drop_probability, "Miss probability");
  scene_cmd->add_option("--spurious", scene.model.spurious_per_image, "False boxes per image");
  RegressionOpts reg;
  auto* reg_cmd = synth_cmd->add_subcommand("regression", "Regression data with known structure");
  reg_cmd->add_option("--kind", reg.kind, "friedman, linear or income-race");
  reg_cmd->add_option("--n", reg.n, "Rows");
  reg_cmd->add_option("--noise", reg.noise, "Noise standard deviation");
  reg_cmd->add_option("--out", reg.out, "CSV to write")->required();
  reg_cmd->add_option("--truth-out", reg.truth_out, "Generating coefficients as JSON");
  FeatureSynthOpts feat;
  auto* feat_cmd = synth_cmd->add_subcommand("features", "Block-group feature table with the standard columns");
  feat_cmd->add_option("--n", feat.n, "Block groups");
  feat_cmd->add_option("--unincorporated", feat.unincorporated, "Share of rows without policy values");
  feat_cmd->add_option("--out", feat.out, "CSV to write")->required();

  ReportOpts rep;
  auto* rep_cmd = app.add_subcommand("report", "Model comparison and summary tables");
  rep_cmd->add_flag("--table1", rep.table1, "Model comparison from a train directory");
  rep_cmd->add_flag("--table-a1", rep.table_a1, "Summary statistics of a feature table");
  rep_cmd->add_flag("--text", rep.text, "Fixed-width text instead of CSV");
  rep_cmd->add_option("--grid-dir", rep.grid_dir, "Output directory of train");
  rep_cmd->add_option("--features", rep.features, "Feature table CSV");
  rep_cmd->add_option("--out", rep.out, "Output file (default stdout)");

  std::vector<const char*> argv{"solarmap"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    check_config(cfg);
    if (plan_cmd->parsed()) return cmd_plan(plan, cfg, out);
    if (fetch_cmd->parsed()) return cmd_fetch(fetch, cfg, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval, cfg, out);
    if (agg_cmd->parsed()) return cmd_aggregate(agg, cfg, out, err);
    if (join_cmd->parsed()) return cmd_join(join, out);
    if (val_cmd->parsed()) return cmd_validate(val, out);
    if (train_cmd->parsed()) return cmd_train(train, cfg, out, err);
    if (fis_cmd->parsed()) return cmd_fis(fis, out, err);
    if (shap_cmd->parsed()) return cmd_shap(shap, cfg, out);
    if (ols_cmd->parsed()) return cmd_ols(ols, out);
    if (ame_cmd->parsed()) return cmd_ame(ame, cfg, out);
    if (scene_cmd->parsed()) return cmd_synth_scene(scene, cfg, out);
    if (reg_cmd->parsed()) return cmd_synth_regression(reg, cfg, out);
    if (feat_cmd->parsed()) return cmd_synth_features(feat, cfg, out);
    if (rep_cmd->parsed()) return cmd_report(rep, out);
  } catch (const ValidationError& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "solarmap: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << "solarmap: no subcommand ran\n";
  return kExitValidation;
}

}  // namespace solarmap::cli

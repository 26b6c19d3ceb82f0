#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "solarmap/explain.hpp"
#include "solarmap/table_io.hpp"

namespace solarmap::explain {

StandardizedScores standardize_fis(std::span<const double> gains) {
  StandardizedScores out;
  if (gains.empty()) return out;
  if (gains.size() == 1) {
    out.scores = {1.0};
    out.degenerate = true;
    return out;
  }
  const auto [lo, hi] = std::minmax_element(gains.begin(), gains.end());
  const double range = *hi - *lo;
  out.scores.resize(gains.size(), 0.0);
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < gains.size(); ++i) out.scores[i] = (gains[i] - *lo) / range;
  // Exact endpoints regardless of rounding in the division.
  out.scores[lo - gains.begin()] = 0.0;
  out.scores[hi - gains.begin()] = 1.0;
  return out;
}

std::vector<double> feature_gains(const learn::TreeEnsemble& ensemble) {
  std::vector<double> gains(ensemble.feature_names.size(), 0.0);
  for (const auto& tree : ensemble.trees) {
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf()) gains[node.feature] += node.gain;
    }
  }
  return gains;
}

ModelFis model_fis(std::string model_id, const learn::TreeEnsemble& ensemble, double r2) {
  return ModelFis{std::move(model_id), ensemble.feature_names, feature_gains(ensemble), r2};
}

FisAggregate aggregate_fis(std::span<const ModelFis> models) {
  if (models.empty()) throw std::invalid_argument("explain: no models to aggregate");
  const std::set<std::string> reference(models.front().features.begin(), models.front().features.end());
  double total_weight = 0.0;
  for (const auto& m : models) {
    if (m.raw.size() != m.features.size()) throw std::invalid_argument("explain: gain vector length mismatch");
    if (std::set<std::string>(m.features.begin(), m.features.end()) != reference ||
        m.features.size() != reference.size()) {
      throw std::invalid_argument(fmt::format("explain: model {} has a different feature set", m.model_id));
    }
    if (!(m.weight > 0.0) || !std::isfinite(m.weight)) {
      throw std::invalid_argument(fmt::format("explain: model {} needs a positive weight", m.model_id));
    }
    total_weight += m.weight;
  }

  FisAggregate agg;
  std::map<std::string, FisRow> rows;
  for (const auto& name : reference) rows[name].feature = name;
  for (const auto& m : models) {
    agg.models.push_back(m.model_id);
    const auto std_scores = standardize_fis(m.raw);
    agg.degenerate.push_back(std_scores.degenerate);
    for (std::size_t j = 0; j < m.features.size(); ++j) {
      FisRow& row = rows[m.features[j]];
      row.per_model.push_back(std_scores.scores[j]);
      row.aggregate += m.weight * std_scores.scores[j];
    }
  }
  for (auto& [name, row] : rows) {
    row.aggregate /= total_weight;
    agg.rows.push_back(std::move(row));
  }
  std::stable_sort(agg.rows.begin(), agg.rows.end(),
                   [](const FisRow& a, const FisRow& b) { return a.aggregate > b.aggregate; });
  return agg;
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("explain: correlation inputs differ in length");
  const std::size_t n = a.size();
  Correlation c;
  if (n < 3) return c;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return c;
  c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::abs(c.r) >= 1.0) {
    c.p_value = 0.0;
    return c;
  }
  const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
  boost::math::students_t dist(df);
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

std::string fis_csv(const FisAggregate& agg, const learn::Dataset* data) {
  std::vector<std::string> header{"feature", "aggregate"};
  for (const auto& m : agg.models) header.push_back(m);
  header.push_back("correlation");
  header.push_back("p_value");
  std::string out = io::csv_line(header);
  std::vector<double> column;
  for (const auto& row : agg.rows) {
    std::vector<std::string> fields{row.feature, io::format_number(row.aggregate)};
    for (double s : row.per_model) fields.push_back(io::format_number(s));
    std::optional<std::size_t> col = data ? data->find(row.feature) : std::nullopt;
    if (col) {
      column.resize(data->rows());
      for (std::size_t i = 0; i < data->rows(); ++i) column[i] = data->at(i, *col);
      const auto c = pearson(column, data->y);
      fields.push_back(io::format_number(c.r));
      fields.push_back(io::format_number(c.p_value));
    } else {
      fields.push_back("NA");
      fields.push_back("NA");
    }
    out += io::csv_line(fields);
  }
  return out;
}

}  // namespace solarmap::explain

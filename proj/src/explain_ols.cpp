#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "solarmap/explain.hpp"
#include "solarmap/table_io.hpp"

namespace solarmap::explain {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t column_of(std::span<const std::string> names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument(fmt::format("explain: unknown feature '{}'", name));
  return static_cast<std::size_t>(it - names.begin());
}

struct ResolvedTerm {
  Term::Kind kind;
  std::size_t a = 0;
  std::size_t b = 0;
};

std::vector<ResolvedTerm> resolve(const LinearModelSpec& spec, std::span<const std::string> names) {
  std::vector<ResolvedTerm> out;
  for (const auto& t : spec.terms) {
    ResolvedTerm r{t.kind, column_of(names, t.a), 0};
    if (t.kind == Term::Kind::Interaction) r.b = column_of(names, t.b);
    out.push_back(r);
  }
  return out;
}

double term_value(const ResolvedTerm& t, std::span<const double> row) {
  switch (t.kind) {
    case Term::Kind::Linear: return row[t.a];
    case Term::Kind::Square: return row[t.a] * row[t.a];
    case Term::Kind::Interaction: return row[t.a] * row[t.b];
  }
  return 0.0;
}

}  // namespace

std::string Term::label() const {
  switch (kind) {
    case Kind::Linear: return a;
    case Kind::Square: return a + "^2";
    case Kind::Interaction: return a + " x " + b;
  }
  return a;
}

Term parse_term(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) throw std::invalid_argument("explain: empty model term");
  // "a*b", or "a x b" as printed by Term::label.
  auto star = s.find('*');
  std::size_t width = 1;
  if (star == std::string::npos && (star = s.find(" x ")) != std::string::npos) width = 3;
  if (star != std::string::npos) {
    Term t{Term::Kind::Interaction, trim(s.substr(0, star)), trim(s.substr(star + width))};
    if (t.a.empty() || t.b.empty()) throw std::invalid_argument(fmt::format("explain: malformed term '{}'", s));
    return t;
  }
  if (s.size() > 2 && s.ends_with("^2")) return Term{Term::Kind::Square, trim(s.substr(0, s.size() - 2)), {}};
  return Term{Term::Kind::Linear, s, {}};
}

void LinearModelSpec::validate(std::span<const std::string> names) const {
  if (terms.empty() && !intercept) throw std::invalid_argument("explain: model has no terms");
  std::set<std::tuple<int, std::string, std::string>> seen;
  for (const auto& t : terms) {
    column_of(names, t.a);
    std::string a = t.a;
    std::string b = t.b;
    if (t.kind == Term::Kind::Interaction) {
      column_of(names, t.b);
      if (a == b) throw std::invalid_argument(fmt::format("explain: write {}^2 rather than a self-interaction", a));
      if (b < a) std::swap(a, b);
    }
    if (!seen.emplace(static_cast<int>(t.kind), a, b).second) {
      throw std::invalid_argument(fmt::format("explain: duplicate term '{}'", t.label()));
    }
  }
}

double OLSFit::se(std::size_t j) const { return std::sqrt(std::max(cov(j, j), 0.0)); }

double OLSFit::p_value(std::size_t j) const {
  const double s = se(j);
  if (!(s > 0.0)) return beta(j) == 0.0 ? 1.0 : 0.0;
  boost::math::students_t dist(static_cast<double>(n - k()));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(beta(j) / s)));
}

std::optional<std::size_t> OLSFit::find(const Term& t) const {
  const std::size_t offset = spec.intercept ? 1 : 0;
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    const auto& s = spec.terms[j];
    if (s.kind != t.kind) continue;
    if ((s.a == t.a && s.b == t.b) || (t.kind == Term::Kind::Interaction && s.a == t.b && s.b == t.a)) {
      return j + offset;
    }
  }
  return std::nullopt;
}

Eigen::MatrixXd design_matrix(const learn::Dataset& data, const LinearModelSpec& spec) {
  spec.validate(data.names);
  const auto terms = resolve(spec, data.names);
  const std::size_t offset = spec.intercept ? 1 : 0;
  Eigen::MatrixXd X(data.rows(), terms.size() + offset);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (spec.intercept) X(i, 0) = 1.0;
    const auto row = data.row(i);
    for (std::size_t j = 0; j < terms.size(); ++j) X(i, j + offset) = term_value(terms[j], row);
  }
  return X;
}

OLSFit ols_fit(const learn::Dataset& data, const LinearModelSpec& spec) {
  data.validate();
  const Eigen::MatrixXd X = design_matrix(data, spec);
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  OLSFit fit;
  fit.spec = spec;
  fit.feature_names = data.names;
  if (spec.intercept) fit.labels.push_back("(Intercept)");
  for (const auto& t : spec.terms) fit.labels.push_back(t.label());
  if (n <= k) throw std::invalid_argument(fmt::format("explain: {} rows cannot identify {} coefficients", n, k));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k) {
    std::vector<std::string> dropped;
    for (Eigen::Index j = qr.rank(); j < k; ++j) dropped.push_back(fit.labels[qr.colsPermutation().indices()(j)]);
    std::sort(dropped.begin(), dropped.end());
    throw std::domain_error(fmt::format("explain: design matrix is rank deficient; collinear terms: {}",
                                        fmt::join(dropped, ", ")));
  }
  const Eigen::Map<const Eigen::VectorXd> y(data.y.data(), n);
  fit.beta = qr.solve(y);
  fit.residuals = y - X * fit.beta;
  fit.n = static_cast<std::size_t>(n);

  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const auto& P = qr.colsPermutation();
  const Eigen::MatrixXd bread = P * (Rinv * Rinv.transpose()) * P.transpose();
  const Eigen::MatrixXd scaled = X.array().colwise() * fit.residuals.array();
  const Eigen::MatrixXd meat = scaled.transpose() * scaled;
  fit.cov = bread * meat * bread * (static_cast<double>(n) / static_cast<double>(n - k));
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();

  const double mean = y.mean();
  const double sst = (y.array() - mean).square().sum();
  const double sse = fit.residuals.squaredNorm();
  fit.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  return fit;
}

double ols_predict(const OLSFit& fit, std::span<const double> row) {
  if (row.size() != fit.feature_names.size()) throw std::invalid_argument("explain: row width differs from fit");
  const auto terms = resolve(fit.spec, fit.feature_names);
  const std::size_t offset = fit.spec.intercept ? 1 : 0;
  double v = fit.spec.intercept ? fit.beta(0) : 0.0;
  for (std::size_t j = 0; j < terms.size(); ++j) v += fit.beta(j + offset) * term_value(terms[j], row);
  return v;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return "†";
  return "";
}

namespace {

std::vector<std::string> union_labels(std::span<const OLSFit> fits) {
  std::vector<std::string> labels;
  for (const auto& f : fits) {
    for (const auto& l : f.labels) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
  }
  return labels;
}

std::optional<std::size_t> label_index(const OLSFit& f, const std::string& label) {
  const auto it = std::find(f.labels.begin(), f.labels.end(), label);
  if (it == f.labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - f.labels.begin());
}

void check_names(std::span<const OLSFit> fits, std::span<const std::string> names) {
  if (fits.size() != names.size()) throw std::invalid_argument("explain: one name per fitted model");
}

}  // namespace

std::string ols_table_csv(std::span<const OLSFit> fits, std::span<const std::string> model_names) {
  check_names(fits, model_names);
  std::vector<std::string> header{"term"};
  for (const auto& m : model_names) {
    for (const char* suffix : {"coef", "se", "p", "stars"}) header.push_back(fmt::format("{}_{}", m, suffix));
  }
  std::string out = io::csv_line(header);
  for (const auto& label : union_labels(fits)) {
    std::vector<std::string> row{label};
    for (const auto& f : fits) {
      const auto j = label_index(f, label);
      if (!j) {
        row.insert(row.end(), {"", "", "", ""});
        continue;
      }
      const double p = f.p_value(*j);
      row.insert(row.end(), {io::format_number(f.beta(*j)), io::format_number(f.se(*j)), io::format_number(p),
                             significance_stars(p)});
    }
    out += io::csv_line(row);
  }
  for (const char* stat : {"N", "R2"}) {
    std::vector<std::string> row{stat};
    for (const auto& f : fits) {
      row.push_back(stat[0] == 'N' ? std::to_string(f.n) : io::format_number(f.r2));
      row.insert(row.end(), {"", "", ""});
    }
    out += io::csv_line(row);
  }
  return out;
}

std::string ols_table_text(std::span<const OLSFit> fits, std::span<const std::string> model_names) {
  check_names(fits, model_names);
  const auto labels = union_labels(fits);
  std::size_t width = 12;
  for (const auto& l : labels) width = std::max(width, l.size() + 2);
  std::string out = fmt::format("{:<{}}", "", width);
  for (const auto& m : model_names) out += fmt::format("{:>18}", m);
  out += '\n';
  for (const auto& label : labels) {
    std::string coef_line = fmt::format("{:<{}}", label, width);
    std::string se_line = fmt::format("{:<{}}", "", width);
    for (const auto& f : fits) {
      const auto j = label_index(f, label);
      if (!j) {
        coef_line += fmt::format("{:>18}", "");
        se_line += fmt::format("{:>18}", "");
        continue;
      }
      // The dagger is one column wide but three bytes long.
      const std::string stars = significance_stars(f.p_value(*j));
      const std::string cell = fmt::format("{:.4g}{}", f.beta(*j), stars);
      const std::size_t visible = cell.size() - (stars == "†" ? 2 : 0);
      coef_line += std::string(visible < 18 ? 18 - visible : 0, ' ') + cell;
      se_line += fmt::format("{:>18}", fmt::format("({:.4g})", f.se(*j)));
    }
    out += coef_line + '\n' + se_line + '\n';
  }
  out += fmt::format("{:<{}}", "N", width);
  for (const auto& f : fits) out += fmt::format("{:>18}", f.n);
  out += '\n';
  out += fmt::format("{:<{}}", "R^2", width);
  for (const auto& f : fits) out += fmt::format("{:>18.3f}", f.r2);
  out += '\n';
  out += "Robust standard errors in parentheses. *** p<0.001, ** p<0.01, * p<0.05, † p<0.1\n";
  return out;
}

std::vector<double> moderator_grid(const learn::Dataset& data, std::string_view column, std::size_t points) {
  const auto col = data.find(column);
  if (!col) throw std::invalid_argument(fmt::format("explain: unknown moderator '{}'", column));
  if (points == 0 || data.rows() == 0) return {};
  double lo = data.at(0, *col);
  double hi = lo;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    lo = std::min(lo, data.at(i, *col));
    hi = std::max(hi, data.at(i, *col));
  }
  std::vector<double> grid(points, lo);
  for (std::size_t g = 1; g < points; ++g) grid[g] = lo + (hi - lo) * static_cast<double>(g) / (points - 1);
  if (points > 1) grid.back() = hi;
  return grid;
}

AMEReport ame(const OLSFit& fit, const learn::Dataset& data, std::string_view focal, std::string_view moderator,
              std::span<const double> grid) {
  if (data.names != fit.feature_names) throw std::invalid_argument("explain: data layout differs from the fit");
  const std::size_t f = column_of(data.names, std::string(focal));
  const std::size_t m = column_of(data.names, std::string(moderator));
  bool involved = false;
  for (const auto& t : fit.spec.terms) involved = involved || t.a == focal || t.b == focal;
  if (!involved) throw std::invalid_argument(fmt::format("explain: focal feature '{}' is not in the model", focal));

  std::vector<double> means(data.cols(), 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) means[j] += data.at(i, j);
  }
  for (double& v : means) v /= static_cast<double>(data.rows());

  const auto terms = resolve(fit.spec, fit.feature_names);
  const std::size_t offset = fit.spec.intercept ? 1 : 0;
  AMEReport report{std::string(focal), std::string(moderator), {}};
  for (double g : grid) {
    // The derivative is linear in the columns, so its sample mean only needs
    // column means with the moderator pinned.
    auto mean_of = [&](std::size_t col) { return col == m ? g : means[col]; };
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fit.k()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto& t = terms[j];
      double d = 0.0;
      switch (t.kind) {
        case Term::Kind::Linear: d = t.a == f ? 1.0 : 0.0; break;
        case Term::Kind::Square: d = t.a == f ? 2.0 * mean_of(f) : 0.0; break;
        case Term::Kind::Interaction:
          if (t.a == f) d = mean_of(t.b);
          else if (t.b == f) d = mean_of(t.a);
          break;
      }
      c(static_cast<Eigen::Index>(j + offset)) = d;
    }
    const double value = c.dot(fit.beta);
    const double var = c.dot(fit.cov * c);
    report.points.push_back(AMEPoint{g, value, std::sqrt(std::max(var, 0.0))});
  }
  return report;
}

std::string ame_csv(const AMEReport& report) {
  std::string out = io::csv_line({"focal", "moderator", "moderator_value", "ame", "se", "ci_low", "ci_high"});
  for (const auto& p : report.points) {
    out += io::csv_line({report.focal, report.moderator, io::format_number(p.moderator), io::format_number(p.ame),
                         io::format_number(p.se), io::format_number(p.ame - 1.96 * p.se),
                         io::format_number(p.ame + 1.96 * p.se)});
  }
  return out;
}

}  // namespace solarmap::explain

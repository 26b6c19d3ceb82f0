#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "solarmap/learn.hpp"

namespace solarmap::explain {

// ---- feature importance ----------------------------------------------------

struct StandardizedScores {
  std::vector<double> scores;
  /// Set when fewer than two distinct gains exist; a single feature maps to 1,
  /// all-equal gains map to 0.
  bool degenerate = false;
};

/// Min-max scaling of raw importances to [0, 1].
StandardizedScores standardize_fis(std::span<const double> gains);

/// Total split gain per model feature, summed over every tree.
std::vector<double> feature_gains(const learn::TreeEnsemble& ensemble);

struct ModelFis {
  std::string model_id;
  std::vector<std::string> features;
  std::vector<double> raw;
  double weight = 0.0;  // the model's R^2
};

ModelFis model_fis(std::string model_id, const learn::TreeEnsemble& ensemble, double r2);

struct FisRow {
  std::string feature;
  double aggregate = 0.0;
  std::vector<double> per_model;  // standardized, parallel to FisAggregate::models
};

struct FisAggregate {
  std::vector<std::string> models;
  std::vector<FisRow> rows;  // descending aggregate, ties by name
  std::vector<bool> degenerate;
};

/// Weighted mean of standardized scores, weights being the model R^2 values.
/// Throws std::invalid_argument when feature sets differ or a weight is not
/// positive.
FisAggregate aggregate_fis(std::span<const ModelFis> models);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

/// Pearson correlation with a two-sided t-test p-value.
Correlation pearson(std::span<const double> a, std::span<const double> b);

/// feature,aggregate,<model columns>,correlation,p_value. Correlations are
/// computed against the target of `data` when given.
std::string fis_csv(const FisAggregate& agg, const learn::Dataset* data = nullptr);

// ---- SHAP ------------------------------------------------------------------

struct ShapExplanation {
  std::string instance_id;
  double base_value = 0.0;
  double prediction = 0.0;
  std::vector<double> phi;
};

/// Path-dependent TreeSHAP using node covers. Throws std::invalid_argument
/// for ensembles lacking cover statistics or on dimension mismatch.
ShapExplanation tree_shap(const learn::TreeEnsemble& ensemble, std::span<const double> x);

/// Explains every row; rows are independent and run on `threads` workers.
std::vector<ShapExplanation> explain_dataset(const learn::TreeEnsemble& ensemble, const learn::Dataset& data,
                                             int threads = 1);

/// Cover-weighted mean output of one tree.
double expected_value(const learn::Tree& tree);

struct ShapFeature {
  std::string name;
  std::size_t index = 0;
  double mean_abs_phi = 0.0;
  std::vector<double> phi;
  std::vector<double> normalized_value;  // min-max per feature, 0.5 when constant
};

struct ShapSummary {
  std::vector<ShapFeature> features;  // descending mean |phi|
};

ShapSummary shap_summary(std::span<const ShapExplanation> explanations, const learn::Dataset& data,
                         std::size_t top_k = 0);

/// instance,feature,phi,value in long format.
std::string shap_csv(std::span<const ShapExplanation> explanations, const learn::Dataset& data);
/// rank,feature,mean_abs_phi
std::string shap_summary_csv(const ShapSummary& summary);

// ---- linear models ---------------------------------------------------------

struct Term {
  enum class Kind { Linear, Square, Interaction };
  Kind kind = Kind::Linear;
  std::string a;
  std::string b;  // interactions only

  std::string label() const;
  friend bool operator==(const Term&, const Term&) = default;
};

/// "x", "x^2" or "x*y".
Term parse_term(std::string_view text);

struct LinearModelSpec {
  std::vector<Term> terms;
  bool intercept = true;

  /// Throws std::invalid_argument on unknown features or duplicate terms
  /// (x*y and y*x are the same term).
  void validate(std::span<const std::string> names) const;
};

struct OLSFit {
  LinearModelSpec spec;
  std::vector<std::string> labels;  // intercept first when present
  std::vector<std::string> feature_names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;  // HC1
  Eigen::VectorXd residuals;
  double r2 = 0.0;
  std::size_t n = 0;

  std::size_t k() const { return static_cast<std::size_t>(beta.size()); }
  double se(std::size_t j) const;
  double p_value(std::size_t j) const;
  std::optional<std::size_t> find(const Term& t) const;
};

Eigen::MatrixXd design_matrix(const learn::Dataset& data, const LinearModelSpec& spec);

/// Least squares by pivoted QR with heteroskedasticity-robust covariance.
/// Rank deficiency throws std::domain_error naming the dropped terms.
OLSFit ols_fit(const learn::Dataset& data, const LinearModelSpec& spec);

/// Fitted value for a row laid out like the fitting data.
double ols_predict(const OLSFit& fit, std::span<const double> row);

/// "***" p<.001, "**" p<.01, "*" p<.05, "†" p<.1.
std::string significance_stars(double p);

/// term,<model>_coef,<model>_se,<model>_p,<model>_stars ... plus N and R2 rows.
std::string ols_table_csv(std::span<const OLSFit> fits, std::span<const std::string> model_names);
/// Coefficient with stars, robust SE in parentheses underneath.
std::string ols_table_text(std::span<const OLSFit> fits, std::span<const std::string> model_names);

struct AMEPoint {
  double moderator = 0.0;
  double ame = 0.0;
  double se = 0.0;
};

struct AMEReport {
  std::string focal;
  std::string moderator;
  std::vector<AMEPoint> points;
};

/// Evenly spaced values spanning the observed range of a column.
std::vector<double> moderator_grid(const learn::Dataset& data, std::string_view column, std::size_t points = 20);

/// Average derivative of the fitted surface with respect to `focal`, with the
/// moderator fixed at each grid value; delta-method SEs from the robust
/// covariance.
AMEReport ame(const OLSFit& fit, const learn::Dataset& data, std::string_view focal, std::string_view moderator,
              std::span<const double> grid);

std::string ame_csv(const AMEReport& report);

}  // namespace solarmap::explain

#pragma once

// Independent reference implementations used as test oracles. Each one is
// written directly from the protocol it checks and shares no code with the
// library beyond plain data types.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "solarmap/detect.hpp"
#include "solarmap/explain.hpp"
#include "solarmap/learn.hpp"

namespace oracle {

using solarmap::detect::BBox;
using solarmap::detect::DetectionSet;
using solarmap::detect::GroundTruthSet;
using solarmap::detect::Rect;

// Counts lattice cells of side `step` whose centres fall inside each box.
// Exact when box edges sit on the lattice.
double raster_iou(const Rect& a, const Rect& b, double step);

// Greedy NMS by explicit sort-then-scan with a suppression flag per box.
std::vector<std::size_t> greedy_nms(const std::vector<BBox>& boxes, double roof_thr, double pv_thr);

// The unique subset S such that every box outside S is suppressed by a
// higher-priority member of S and no member is. Found by enumerating all
// subsets, so only usable for small n.
std::vector<std::size_t> subset_nms(const std::vector<BBox>& boxes, double roof_thr, double pv_thr);

// COCO-style AP/AR grid recomputed cell by cell from the protocol text.
// Layout matches EvalReport::cell (t, k, a, m).
struct ReferenceEval {
  std::vector<double> ap;
  std::vector<double> ar;
};
ReferenceEval reference_eval(const std::vector<DetectionSet>& dets, const std::vector<GroundTruthSet>& gts);

// Shapley values by enumerating every coalition with cover-weighted
// conditional expectations. Returns base value in front, then phi.
std::vector<double> brute_force_shapley(const solarmap::learn::TreeEnsemble& ensemble, std::span<const double> x);

// beta = (X'X)^{-1} X'y by full-pivot LU on the normal equations.
Eigen::VectorXd normal_equation_beta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// HC1 sandwich built with explicit loops over observations.
Eigen::MatrixXd hc1_sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals);

// Finite-difference average marginal effect of `focal` with the moderator
// pinned at `m`, using the fitted surface.
double fd_ame(const solarmap::explain::OLSFit& fit, const solarmap::learn::Dataset& data, std::size_t focal,
              std::size_t moderator, double m, double h);

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p);

// Random box on a half-pixel lattice inside [0, extent).
BBox lattice_box(std::mt19937_64& rng, double extent, solarmap::detect::BoxClass cls);

}  // namespace oracle

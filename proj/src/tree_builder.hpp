#pragma once

// Shared between the tree, forest and boosting translation units.

#include <cstdint>
#include <span>
#include <vector>

#include "solarmap/learn.hpp"
#include "solarmap/parallel.hpp"

namespace solarmap::learn::detail {

/// Per-feature bin codes. A bin is the set of training values v with
/// cuts[b-1] < v <= cuts[b]. When a feature has at most max_bin distinct
/// values (or max_bin is 0) each distinct value gets its own bin.
struct BinnedMatrix {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::vector<double>> cuts;
  std::vector<std::uint32_t> codes;  // column-major

  static BinnedMatrix build(const Dataset& data, int max_bin);
  std::uint32_t code(std::size_t f, std::size_t i) const { return codes[f * n + i]; }
  std::size_t bins(std::size_t f) const { return cuts[f].size(); }
};

struct BuilderParams {
  Growth growth = Growth::DepthWise;
  int max_depth = 0;
  int num_leaves = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double gain_scale = 1.0;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  int features_per_split = 0;  // 0: every allowed feature
  std::uint64_t seed = 0;
  ThreadPool* pool = nullptr;  // parallel feature scans when set
};

BuilderParams params_for(const LearnerConfig& config, std::size_t p);

/// sample holds row indices in accumulation order and may repeat rows.
/// features lists the columns this tree may split on, ascending.
Tree build_tree(const Dataset& data, const BinnedMatrix& bins, std::span<const double> grad,
                std::span<const double> hess, std::vector<std::size_t> sample, std::vector<int> features,
                const BuilderParams& params);

}  // namespace solarmap::learn::detail

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "solarmap/explain.hpp"
#include "solarmap/parallel.hpp"
#include "solarmap/table_io.hpp"

namespace solarmap::explain {

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
  path[depth] = PathElement{feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - path[i].pweight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight of the path with element `index` removed.
double unwound_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].pweight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].pweight - tmp * zero * ((depth - i) / static_cast<double>(depth + 1));
    } else if (zero != 0.0) {
      total += (path[i].pweight / zero) / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

class TreeExplainer {
 public:
  TreeExplainer(const learn::Tree& tree, std::span<const double> x, std::vector<double>& phi)
      : tree_(tree), x_(x), phi_(phi) {
    const std::size_t d = static_cast<std::size_t>(tree.depth()) + 2;
    storage_.resize(d * (d + 1) / 2 + d);
  }

  void run() { recurse(0, storage_.data(), 0, 1.0, 1.0, -1); }

 private:
  void recurse(int node, PathElement* parent_path, int depth, double zero_fraction, double one_fraction,
               int feature) {
    PathElement* path = parent_path + depth;
    if (depth > 0) std::copy(parent_path, parent_path + depth, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const auto& n = tree_.nodes[node];
    if (n.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_sum(path, depth, i);
        phi_[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * n.value;
      }
      return;
    }
    const int hot = x_[n.feature] < n.threshold ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    const double hot_zero = tree_.nodes[hot].cover / n.cover;
    const double cold_zero = tree_.nodes[cold].cover / n.cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    int index = 0;
    while (index <= depth && path[index].feature != n.feature) ++index;
    if (index <= depth) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      --depth;
    }
    recurse(hot, path, depth + 1, hot_zero * incoming_zero, incoming_one, n.feature);
    recurse(cold, path, depth + 1, cold_zero * incoming_zero, 0.0, n.feature);
  }

  const learn::Tree& tree_;
  std::span<const double> x_;
  std::vector<double>& phi_;
  std::vector<PathElement> storage_;
};

void require_covers(const learn::TreeEnsemble& ensemble) {
  for (const auto& tree : ensemble.trees) {
    for (const auto& n : tree.nodes) {
      if (!(n.cover > 0.0)) throw std::invalid_argument("explain: ensemble lacks cover statistics");
    }
  }
}

}  // namespace

double expected_value(const learn::Tree& tree) {
  // Children are created after their parent, so a reverse sweep sees both
  // children before the parent.
  std::vector<double> e(tree.nodes.size(), 0.0);
  for (std::size_t i = tree.nodes.size(); i-- > 0;) {
    const auto& n = tree.nodes[i];
    if (n.is_leaf()) {
      e[i] = n.value;
    } else {
      const double cl = tree.nodes[n.left].cover;
      const double cr = tree.nodes[n.right].cover;
      e[i] = (cl * e[n.left] + cr * e[n.right]) / n.cover;
    }
  }
  return e.empty() ? 0.0 : e[0];
}

ShapExplanation tree_shap(const learn::TreeEnsemble& ensemble, std::span<const double> x) {
  if (x.size() != ensemble.feature_names.size()) {
    throw std::invalid_argument(
        fmt::format("explain: expected {} features, got {}", ensemble.feature_names.size(), x.size()));
  }
  require_covers(ensemble);
  ShapExplanation out;
  out.phi.assign(x.size(), 0.0);
  const double w = ensemble.tree_weight();
  std::vector<double> tree_phi(x.size());
  out.base_value = ensemble.kind == learn::Algorithm::Gbdt ? ensemble.base_score : 0.0;
  for (const auto& tree : ensemble.trees) {
    std::fill(tree_phi.begin(), tree_phi.end(), 0.0);
    TreeExplainer(tree, x, tree_phi).run();
    for (std::size_t j = 0; j < x.size(); ++j) out.phi[j] += w * tree_phi[j];
    out.base_value += w * expected_value(tree);
  }
  out.prediction = ensemble.predict(x);
  return out;
}

std::vector<ShapExplanation> explain_dataset(const learn::TreeEnsemble& ensemble, const learn::Dataset& data,
                                             int threads) {
  std::vector<std::size_t> col(ensemble.feature_names.size());
  for (std::size_t j = 0; j < col.size(); ++j) {
    const auto found = data.find(ensemble.feature_names[j]);
    if (!found) throw std::invalid_argument(fmt::format("explain: dataset lacks '{}'", ensemble.feature_names[j]));
    col[j] = *found;
  }
  require_covers(ensemble);
  std::vector<ShapExplanation> out(data.rows());
  ThreadPool pool(resolve_threads(threads));
  pool.parallel_for(data.rows(), [&](std::size_t i) {
    std::vector<double> x(col.size());
    for (std::size_t j = 0; j < col.size(); ++j) x[j] = data.at(i, col[j]);
    out[i] = tree_shap(ensemble, x);
    out[i].instance_id = data.ids.empty() ? std::to_string(i) : data.ids[i];
  });
  return out;
}

ShapSummary shap_summary(std::span<const ShapExplanation> explanations, const learn::Dataset& data,
                         std::size_t top_k) {
  if (explanations.empty()) throw std::invalid_argument("explain: no explanations to summarize");
  if (explanations.size() != data.rows()) throw std::invalid_argument("explain: one data row per explanation");
  const std::size_t p = explanations.front().phi.size();
  if (p != data.cols()) throw std::invalid_argument("explain: explanation width differs from data");
  ShapSummary s;
  for (std::size_t j = 0; j < p; ++j) {
    ShapFeature f;
    f.name = data.names[j];
    f.index = j;
    double lo = data.at(0, j);
    double hi = lo;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      lo = std::min(lo, data.at(i, j));
      hi = std::max(hi, data.at(i, j));
    }
    for (std::size_t i = 0; i < explanations.size(); ++i) {
      const double phi = explanations[i].phi[j];
      f.phi.push_back(phi);
      f.mean_abs_phi += std::abs(phi);
      f.normalized_value.push_back(hi > lo ? (data.at(i, j) - lo) / (hi - lo) : 0.5);
    }
    f.mean_abs_phi /= static_cast<double>(explanations.size());
    s.features.push_back(std::move(f));
  }
  std::stable_sort(s.features.begin(), s.features.end(),
                   [](const ShapFeature& a, const ShapFeature& b) { return a.mean_abs_phi > b.mean_abs_phi; });
  if (top_k > 0 && s.features.size() > top_k) s.features.resize(top_k);
  return s;
}

std::string shap_csv(std::span<const ShapExplanation> explanations, const learn::Dataset& data) {
  std::string out = io::csv_line({"instance", "feature", "phi", "value"});
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    const auto& e = explanations[i];
    for (std::size_t j = 0; j < e.phi.size(); ++j) {
      out += io::csv_line({e.instance_id, data.names[j], io::format_number(e.phi[j]),
                           io::format_number(data.at(i, j))});
    }
  }
  return out;
}

std::string shap_summary_csv(const ShapSummary& summary) {
  std::string out = io::csv_line({"rank", "feature", "mean_abs_phi"});
  for (std::size_t r = 0; r < summary.features.size(); ++r) {
    const auto& f = summary.features[r];
    out += io::csv_line({std::to_string(r + 1), f.name, io::format_number(f.mean_abs_phi)});
  }
  return out;
}

}  // namespace solarmap::explain

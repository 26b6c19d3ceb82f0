#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

#include "solarmap/learn.hpp"
#include "tree_builder.hpp"

namespace solarmap::learn {

namespace detail {

BinnedMatrix BinnedMatrix::build(const Dataset& data, int max_bin) {
  BinnedMatrix m;
  m.n = data.rows();
  m.p = data.cols();
  m.cuts.resize(m.p);
  m.codes.resize(m.n * m.p);
  std::vector<double> col(m.n);
  for (std::size_t f = 0; f < m.p; ++f) {
    for (std::size_t i = 0; i < m.n; ++i) col[i] = data.at(i, f);
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& cuts = m.cuts[f];
    if (max_bin <= 0 || distinct.size() <= static_cast<std::size_t>(max_bin)) {
      cuts = std::move(distinct);
    } else {
      // Upper edges at the k/max_bin training quantiles, always ending at the max.
      for (int k = 1; k < max_bin; ++k) {
        const std::size_t pos = (static_cast<std::size_t>(k) * m.n + max_bin - 1) / max_bin;
        cuts.push_back(sorted[std::max<std::size_t>(pos, 1) - 1]);
      }
      cuts.push_back(sorted.back());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    }
    for (std::size_t i = 0; i < m.n; ++i) {
      const auto it = std::lower_bound(cuts.begin(), cuts.end(), col[i]);
      m.codes[f * m.n + i] = static_cast<std::uint32_t>(it - cuts.begin());
    }
  }
  return m;
}

BuilderParams params_for(const LearnerConfig& config, std::size_t p) {
  BuilderParams b;
  b.growth = config.growth;
  b.max_depth = config.max_depth;
  b.num_leaves = config.growth == Growth::LeafWise ? config.num_leaves : 0;
  b.gamma = config.gamma;
  b.min_samples_split = config.min_samples_split;
  b.min_samples_leaf = config.min_samples_leaf;
  if (config.algorithm == Algorithm::Gbdt) {
    b.lambda = config.reg_lambda;
    b.alpha = config.alpha;
    b.gain_scale = 0.5;
  }
  if (config.max_features == MaxFeatures::Sqrt) {
    b.features_per_split = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  }
  return b;
}

namespace {

constexpr double kNoGain = -std::numeric_limits<double>::infinity();

struct Candidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = kNoGain;
};

struct Group {
  std::uint32_t code = 0;
  double g = 0.0;
  double h = 0.0;
  std::size_t count = 0;
  double lo = 0.0;
  double hi = 0.0;
};

struct Work {
  int id = 0;
  int depth = 0;
  std::vector<std::size_t> rows;
  double g = 0.0;
  double h = 0.0;
  Candidate best;
};

class Builder {
 public:
  Builder(const Dataset& data, const BinnedMatrix& bins, std::span<const double> grad, std::span<const double> hess,
          std::vector<int> features, const BuilderParams& params)
      : data_(data), bins_(bins), grad_(grad), hess_(hess), features_(std::move(features)), p_(params),
        rng_(params.seed) {}

  Tree run(std::vector<std::size_t> sample) {
    Work root = make_work(0, std::move(sample));
    tree_.nodes.push_back(leaf_node(root));
    if (p_.growth == Growth::LeafWise) {
      grow_leaf_wise(std::move(root));
    } else {
      grow_depth_wise(std::move(root));
    }
    return std::move(tree_);
  }

 private:
  double soft(double g) const {
    if (g > p_.alpha) return g - p_.alpha;
    if (g < -p_.alpha) return g + p_.alpha;
    return 0.0;
  }

  double score(double g, double h) const {
    const double den = h + p_.lambda;
    if (!(den > 0.0)) return 0.0;
    const double t = soft(g);
    return t * t / den;
  }

  double leaf_value(double g, double h) const {
    const double den = h + p_.lambda;
    if (!(den > 0.0)) return 0.0;
    return -soft(g) / den;
  }

  TreeNode leaf_node(const Work& w) const {
    TreeNode node;
    node.cover = w.h;
    node.value = leaf_value(w.g, w.h);
    return node;
  }

  bool may_split(const Work& w) const {
    if (p_.max_depth > 0 && w.depth >= p_.max_depth) return false;
    if (w.rows.size() < static_cast<std::size_t>(std::max(p_.min_samples_split, 2))) return false;
    return w.rows.size() >= 2 * static_cast<std::size_t>(std::max(p_.min_samples_leaf, 1));
  }

  bool splittable(const Work& w) const { return w.best.feature >= 0 && w.best.gain > p_.gamma; }

  Work make_work(int depth, std::vector<std::size_t> rows) {
    Work w;
    w.depth = depth;
    w.rows = std::move(rows);
    for (std::size_t r : w.rows) {
      w.g += grad_[r];
      w.h += hess_[r];
    }
    if (may_split(w)) w.best = find_best(w);
    return w;
  }

  std::vector<int> split_features() {
    if (p_.features_per_split <= 0 || static_cast<std::size_t>(p_.features_per_split) >= features_.size()) {
      return features_;
    }
    std::vector<int> pool = features_;
    const std::size_t k = static_cast<std::size_t>(p_.features_per_split);
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng_)]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  // Occupied bins of one feature among the node rows, ascending by code. Sums
  // run in row order on both paths so they agree bit for bit.
  std::vector<Group> groups(int f, const std::vector<std::size_t>& rows) const {
    const std::size_t nb = bins_.bins(f);
    std::vector<Group> out;
    if (nb <= 2 * rows.size()) {
      std::vector<Group> hist(nb);
      for (std::size_t r : rows) {
        Group& b = hist[bins_.code(f, r)];
        const double v = data_.at(r, f);
        if (b.count == 0) {
          b.lo = v;
          b.hi = v;
        } else {
          b.lo = std::min(b.lo, v);
          b.hi = std::max(b.hi, v);
        }
        b.g += grad_[r];
        b.h += hess_[r];
        ++b.count;
      }
      for (std::uint32_t c = 0; c < nb; ++c) {
        if (hist[c].count == 0) continue;
        hist[c].code = c;
        out.push_back(hist[c]);
      }
      return out;
    }
    std::vector<std::pair<std::uint32_t, std::size_t>> keyed;
    keyed.reserve(rows.size());
    for (std::size_t r : rows) keyed.emplace_back(bins_.code(f, r), r);
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [code, r] : keyed) {
      const double v = data_.at(r, f);
      if (out.empty() || out.back().code != code) {
        out.push_back(Group{code, 0.0, 0.0, 0, v, v});
      }
      Group& b = out.back();
      b.lo = std::min(b.lo, v);
      b.hi = std::max(b.hi, v);
      b.g += grad_[r];
      b.h += hess_[r];
      ++b.count;
    }
    return out;
  }

  Candidate scan(int f, const Work& w) const {
    Candidate best;
    const auto gs = groups(f, w.rows);
    if (gs.size() < 2) return best;
    const double parent = score(w.g, w.h);
    const std::size_t n = w.rows.size();
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(p_.min_samples_leaf, 1));
    double gl = 0.0;
    double hl = 0.0;
    std::size_t nl = 0;
    for (std::size_t k = 0; k + 1 < gs.size(); ++k) {
      gl += gs[k].g;
      hl += gs[k].h;
      nl += gs[k].count;
      if (nl < min_leaf) continue;
      if (n - nl < min_leaf) break;
      const double gain = p_.gain_scale * (score(gl, hl) + score(w.g - gl, w.h - hl) - parent);
      if (gain > best.gain) {
        double thr = 0.5 * (gs[k].hi + gs[k + 1].lo);
        if (!(gs[k].hi < thr)) thr = gs[k + 1].lo;
        best = Candidate{f, thr, gain};
      }
    }
    return best;
  }

  Candidate find_best(const Work& w) {
    const auto feats = split_features();
    std::vector<Candidate> per(feats.size());
    const bool parallel = p_.pool && p_.pool->size() > 1 && w.rows.size() * feats.size() >= 65536;
    if (parallel) {
      p_.pool->parallel_for(feats.size(), [&](std::size_t i) { per[i] = scan(feats[i], w); });
    } else {
      for (std::size_t i = 0; i < feats.size(); ++i) per[i] = scan(feats[i], w);
    }
    Candidate best;
    for (const auto& c : per) {
      if (c.feature >= 0 && c.gain > best.gain) best = c;
    }
    return best;
  }

  // Turns node w into an internal node and returns its two children.
  std::pair<Work, Work> split(Work& w) {
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : w.rows) {
      (data_.at(r, w.best.feature) < w.best.threshold ? left : right).push_back(r);
    }
    w.rows.clear();
    w.rows.shrink_to_fit();
    Work l = make_work(w.depth + 1, std::move(left));
    Work r = make_work(w.depth + 1, std::move(right));
    l.id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(leaf_node(l));
    r.id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(leaf_node(r));
    TreeNode& node = tree_.nodes[w.id];
    node.feature = w.best.feature;
    node.threshold = w.best.threshold;
    node.gain = w.best.gain;
    node.left = l.id;
    node.right = r.id;
    return {std::move(l), std::move(r)};
  }

  void grow_depth_wise(Work root) {
    std::deque<Work> queue;
    queue.push_back(std::move(root));
    while (!queue.empty()) {
      Work w = std::move(queue.front());
      queue.pop_front();
      if (!splittable(w)) continue;
      auto [l, r] = split(w);
      queue.push_back(std::move(l));
      queue.push_back(std::move(r));
    }
  }

  void grow_leaf_wise(Work root) {
    std::vector<Work> frontier;
    frontier.push_back(std::move(root));
    std::size_t leaves = 1;
    while (p_.num_leaves <= 0 || leaves < static_cast<std::size_t>(p_.num_leaves)) {
      std::size_t pick = frontier.size();
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        if (!splittable(frontier[i])) continue;
        if (pick == frontier.size() || frontier[i].best.gain > frontier[pick].best.gain ||
            (frontier[i].best.gain == frontier[pick].best.gain && frontier[i].id < frontier[pick].id)) {
          pick = i;
        }
      }
      if (pick == frontier.size()) break;
      Work w = std::move(frontier[pick]);
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
      auto [l, r] = split(w);
      if (splittable(l)) frontier.push_back(std::move(l));
      if (splittable(r)) frontier.push_back(std::move(r));
      ++leaves;
    }
  }

  const Dataset& data_;
  const BinnedMatrix& bins_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::vector<int> features_;
  BuilderParams p_;
  std::mt19937_64 rng_;
  Tree tree_;
};

}  // namespace

Tree build_tree(const Dataset& data, const BinnedMatrix& bins, std::span<const double> grad,
                std::span<const double> hess, std::vector<std::size_t> sample, std::vector<int> features,
                const BuilderParams& params) {
  if (sample.empty()) throw std::invalid_argument("learn: cannot fit a tree to zero rows");
  Builder builder(data, bins, grad, hess, std::move(features), params);
  return builder.run(std::move(sample));
}

}  // namespace detail

double Tree::predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

int Tree::leaf_index(std::span<const double> x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return i;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

Tree fit_tree(const Dataset& train, const LearnerConfig& config, std::span<const double> grad,
              std::span<const double> hess) {
  train.validate();
  config.validate();
  const std::size_t n = train.rows();
  std::vector<double> g;
  std::vector<double> h;
  if (grad.empty()) {
    g.resize(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = -train.y[i];
    grad = g;
  }
  if (hess.empty()) {
    h.assign(n, 1.0);
    hess = h;
  }
  if (grad.size() != n || hess.size() != n) throw std::invalid_argument("learn: gradient length mismatch");
  const auto bins = detail::BinnedMatrix::build(train, config.max_bin);
  auto params = detail::params_for(config, train.cols());
  params.seed = config.seed;
  std::vector<std::size_t> sample(n);
  for (std::size_t i = 0; i < n; ++i) sample[i] = i;
  std::vector<int> features(train.cols());
  for (std::size_t j = 0; j < features.size(); ++j) features[j] = static_cast<int>(j);
  return detail::build_tree(train, bins, grad, hess, std::move(sample), std::move(features), params);
}

}  // namespace solarmap::learn

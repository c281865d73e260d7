#pragma once

// Exact 2-nearest-neighbor descriptor matching over a KD-tree with full
// backtracking. Approximate search buys nothing at these problem sizes and
// exactness keeps the matcher testable against a linear scan.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dfield/features.hpp"

namespace dfield {

struct Match {
  int index_a = -1;
  int index_b = -1;
  double distance = 0.0;  // Euclidean descriptor distance of the best match
  double ratio = 0.0;     // best / second-best distance
};

class KdTree {
 public:
  explicit KdTree(std::vector<Descriptor> descs) : descs_(std::move(descs)) {
    if (descs_.empty()) throw Error("build_kdtree: empty descriptor list");
    std::vector<int> order(descs_.size());
    std::iota(order.begin(), order.end(), 0);
    root_ = build(order, 0, int(order.size()), 1);
  }

  struct TwoNn {
    int first = -1, second = -1;
    double d1 = 0.0, d2 = 0.0;  // Euclidean distances
  };

  // Exact two nearest neighbors; distance ties resolve to the lower index.
  TwoNn query(const Descriptor& q) const {
    Best best;
    search(root_, q, best);
    TwoNn r;
    r.first = best.idx1;
    r.second = best.idx2;
    r.d1 = std::sqrt(std::max(0.0, best.d1));
    r.d2 = best.idx2 >= 0 ? std::sqrt(std::max(0.0, best.d2)) : 0.0;
    return r;
  }

  std::size_t size() const { return descs_.size(); }
  int depth() const { return depth_of(root_); }
  const Descriptor& descriptor(int i) const { return descs_[i]; }

 private:
  struct NodeRec {
    int split_dim = -1;   // -1 marks a leaf
    double split_val = 0.0;
    int left = -1, right = -1;
    std::vector<int> points;  // leaf payload
  };
  struct Best {
    int idx1 = -1, idx2 = -1;
    double d1 = std::numeric_limits<double>::max();
    double d2 = std::numeric_limits<double>::max();
  };

  static constexpr int kLeafSize = 8;

  int build(std::vector<int>& order, int begin, int end, int depth_guard) {
    NodeRec rec;
    const int n = end - begin;
    if (n <= kLeafSize) {
      rec.points.assign(order.begin() + begin, order.begin() + end);
      std::sort(rec.points.begin(), rec.points.end());
      nodes_.push_back(std::move(rec));
      return int(nodes_.size()) - 1;
    }
    // split on the dimension with the largest spread
    int dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < 128; ++d) {
      double lo = descs_[order[begin]].values[d], hi = lo;
      for (int i = begin + 1; i < end; ++i) {
        const double v = descs_[order[i]].values[d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        dim = d;
      }
    }
    if (best_spread <= 0.0) {  // all points identical: keep as one leaf
      rec.points.assign(order.begin() + begin, order.begin() + end);
      std::sort(rec.points.begin(), rec.points.end());
      nodes_.push_back(std::move(rec));
      return int(nodes_.size()) - 1;
    }
    const int mid = begin + n / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](int a, int b) {
                       const double va = descs_[a].values[dim], vb = descs_[b].values[dim];
                       return va < vb || (va == vb && a < b);
                     });
    rec.split_dim = dim;
    rec.split_val = descs_[order[mid]].values[dim];
    const int self = int(nodes_.size());
    nodes_.push_back(std::move(rec));
    const int left = build(order, begin, mid, depth_guard + 1);
    const int right = build(order, mid, end, depth_guard + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int node_id, const Descriptor& q, Best& best) const {
    const NodeRec& node = nodes_[node_id];
    if (node.split_dim < 0) {
      for (int idx : node.points) {
        const double d2 = q.distance2(descs_[idx]);
        if (d2 < best.d1 || (d2 == best.d1 && idx < best.idx1)) {
          best.d2 = best.d1;
          best.idx2 = best.idx1;
          best.d1 = d2;
          best.idx1 = idx;
        } else if (d2 < best.d2 || (d2 == best.d2 && idx < best.idx2)) {
          best.d2 = d2;
          best.idx2 = idx;
        }
      }
      return;
    }
    const double diff = q.values[node.split_dim] - node.split_val;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (diff * diff <= best.d2) search(far, q, best);  // full backtracking
  }

  int depth_of(int node_id) const {
    const NodeRec& node = nodes_[node_id];
    if (node.split_dim < 0) return 1;
    return 1 + std::max(depth_of(node.left), depth_of(node.right));
  }

  std::vector<Descriptor> descs_;
  std::vector<NodeRec> nodes_;
  int root_ = 0;
};

inline KdTree build_kdtree(const std::vector<Descriptor>& descs) { return KdTree(descs); }

// For each descriptor in a, its two nearest neighbors in b; a match
// survives when best/second-best < ratio_threshold (Lowe ratio test).
// A single-descriptor tree has no second neighbor and always matches.
inline std::vector<Match> match_features(const KdTree& tree_b,
                                         const std::vector<Descriptor>& descs_a,
                                         double ratio_threshold = 0.75) {
  std::vector<Match> out;
  for (int ia = 0; ia < int(descs_a.size()); ++ia) {
    const auto nn = tree_b.query(descs_a[ia]);
    if (nn.first < 0) continue;
    Match m;
    m.index_a = ia;
    m.index_b = nn.first;
    m.distance = nn.d1;
    if (nn.second < 0) {
      m.ratio = 0.0;
    } else if (nn.d2 <= 0.0) {
      m.ratio = 1.0;  // duplicate points: ambiguous by definition
    } else {
      m.ratio = nn.d1 / nn.d2;
    }
    if (m.ratio < ratio_threshold) out.push_back(m);
  }
  return out;
}

inline std::string matches_csv(const std::vector<Match>& matches) {
  std::string csv = "index_a,index_b,distance,ratio\n";
  char line[96];
  for (const Match& m : matches) {
    std::snprintf(line, sizeof(line), "%d,%d,%.6f,%.6f\n", m.index_a, m.index_b, m.distance,
                  m.ratio);
    csv += line;
  }
  return csv;
}

}  // namespace dfield

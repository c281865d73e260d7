#pragma once

// Exact max-flow / min-cut on a pixel graph: one node per pixel plus an
// implicit source and sink, data terms as terminal capacities and
// smoothness terms as neighbor capacities. Level-graph augmenting paths
// (blocking flow) keep the solve exact and deterministic.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "dfield/core.hpp"

namespace dfield {

class FlowNetwork {
 public:
  explicit FlowNetwork(int node_count) : n_(node_count), first_(node_count + 2, -1) {
    if (node_count < 1) throw Error("FlowNetwork: need at least one node");
  }

  int source() const { return n_; }
  int sink() const { return n_ + 1; }
  int node_count() const { return n_; }

  // Terminal capacities accumulate, so hard constraints can be layered on
  // top of data terms.
  void add_terminal(int node, double cap_from_source, double cap_to_sink) {
    check_node(node);
    if (cap_from_source < 0.0 || cap_to_sink < 0.0)
      throw Error("FlowNetwork: negative capacity");
    if (cap_from_source > 0.0) add_arc(source(), node, cap_from_source);
    if (cap_to_sink > 0.0) add_arc(node, sink(), cap_to_sink);
  }

  void add_edge(int a, int b, double cap, double rev_cap) {
    check_node(a);
    check_node(b);
    if (cap < 0.0 || rev_cap < 0.0) throw Error("FlowNetwork: negative capacity");
    if (a == b) return;
    add_pair(a, b, cap, rev_cap);
  }

  struct Result {
    double flow = 0.0;
    std::vector<std::uint8_t> source_side;  // per pixel node, min-cut partition
  };

  Result max_flow() {
    const int total = n_ + 2;
    std::vector<int> level(total);
    std::vector<int> it(total);
    std::vector<int> queue(total);
    std::vector<int> path_arc;
    path_arc.reserve(64);
    double flow = 0.0;
    constexpr double kEps = 1e-11;

    for (;;) {
      // BFS levels over the residual graph.
      std::fill(level.begin(), level.end(), -1);
      int qh = 0, qt = 0;
      queue[qt++] = source();
      level[source()] = 0;
      while (qh < qt) {
        const int u = queue[qh++];
        for (int a = first_[u]; a >= 0; a = next_[a]) {
          const int v = head_[a];
          if (level[v] < 0 && cap_[a] > kEps) {
            level[v] = level[u] + 1;
            queue[qt++] = v;
          }
        }
      }
      if (level[sink()] < 0) {
        Result r;
        r.flow = flow;
        r.source_side.resize(n_);
        for (int i = 0; i < n_; ++i) r.source_side[i] = level[i] >= 0 ? 1 : 0;
        return r;
      }

      // Blocking flow by iterative advance/retreat with current-arc pointers.
      for (int u = 0; u < total; ++u) it[u] = first_[u];
      for (;;) {
        path_arc.clear();
        int u = source();
        bool reached = false;
        for (;;) {
          if (u == sink()) {
            reached = true;
            break;
          }
          bool advanced = false;
          for (int& a = it[u]; a >= 0; a = next_[a]) {
            const int v = head_[a];
            if (cap_[a] > kEps && level[v] == level[u] + 1) {
              path_arc.push_back(a);
              u = v;
              advanced = true;
              break;
            }
          }
          if (advanced) continue;
          level[u] = -1;  // dead end in this phase
          if (path_arc.empty()) break;
          u = tail_of(path_arc.back());
          path_arc.pop_back();
        }
        if (!reached) break;
        double bottleneck = std::numeric_limits<double>::max();
        for (int a : path_arc) bottleneck = std::min(bottleneck, cap_[a]);
        for (int a : path_arc) {
          cap_[a] -= bottleneck;
          cap_[a ^ 1] += bottleneck;
        }
        flow += bottleneck;
      }
    }
  }

 private:
  void check_node(int node) const {
    if (node < 0 || node >= n_) throw Error("FlowNetwork: node index out of range");
  }
  void add_pair(int a, int b, double cap, double rev_cap) {
    head_.push_back(b);
    tail_.push_back(a);
    cap_.push_back(cap);
    next_.push_back(first_[a]);
    first_[a] = int(head_.size()) - 1;
    head_.push_back(a);
    tail_.push_back(b);
    cap_.push_back(rev_cap);
    next_.push_back(first_[b]);
    first_[b] = int(head_.size()) - 1;
  }
  void add_arc(int a, int b, double cap) { add_pair(a, b, cap, 0.0); }
  int tail_of(int arc) const { return tail_[arc]; }

  int n_;
  std::vector<int> first_;
  std::vector<int> head_, tail_, next_;
  std::vector<double> cap_;
};

}  // namespace dfield

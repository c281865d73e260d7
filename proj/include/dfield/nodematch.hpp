#pragma once

// Per-node displacement measurement between a reference and a deformed
// panorama: extract a template around every mesh node, correlate it over the
// search region, take the peak and optionally refine it. Nodes whose peak
// correlation falls below the quality threshold are flagged invalid and can
// be filled from their element neighbors so the interpolation stage has a
// value at every element node.

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/mesh.hpp"
#include "dfield/parallel.hpp"
#include "dfield/zncc.hpp"

namespace dfield {

struct NodeMatchParams {
  int template_size = 81;        // odd, px
  int search_radius = 50;        // px
  double quality_threshold = 0.8;
  bool subpixel = false;
  bool fill_invalid = true;
  int threads = 1;
};

struct NodeDisplacement {
  int node_id = 0;
  PixelCoord position;
  double u = 0.0;
  double v = 0.0;
  double peak_r = std::numeric_limits<double>::quiet_NaN();
  bool subpixel = false;  // refinement was applied to this node
  bool valid = false;     // peak correlation met the quality threshold
  bool filled = false;    // value averaged from neighbors, not measured
  bool clipped = false;   // search region clipped at the image border
};

inline std::vector<NodeDisplacement> node_displacements(const GrayImage& reference,
                                                        const GrayImage& deformed,
                                                        const Mesh& mesh,
                                                        const NodeMatchParams& params) {
  std::vector<NodeDisplacement> out(mesh.nodes.size());
  parallel_for(std::int64_t(mesh.nodes.size()), params.threads, [&](std::int64_t i) {
    const Node& node = mesh.nodes[i];
    NodeDisplacement& d = out[i];
    d.node_id = node.id;
    d.position = node.position;
    const auto tmpl =
        extract_template(reference, node.position, params.template_size, params.template_size);
    if (!tmpl) return;  // template leaves the reference image: unmatched
    const CorrelationSurface surf = correlate(*tmpl, deformed, params.search_radius);
    d.clipped = surf.clipped;
    const auto pk = peak(surf);
    if (!pk) return;
    d.peak_r = pk->r;
    d.u = pk->du;
    d.v = pk->dv;
    if (params.subpixel) {
      const Refinement ref = subpixel_refine(surf, *pk);
      if (ref.refined) {
        d.u += ref.du;
        d.v += ref.dv;
        d.subpixel = true;
      }
    }
    d.valid = pk->r >= params.quality_threshold;
  });

  if (params.fill_invalid) {
    // Neighbor sets from element connectivity (one cell ring). Filling
    // repeats until stable so chains of bad nodes drain from the rim of
    // their valid neighborhood inward; every pass uses the previous pass's
    // state only, which keeps the result order-independent.
    std::vector<std::set<int>> adjacency(mesh.nodes.size());
    for (const Element& e : mesh.elements) {
      const int n = e.node_count();
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          if (a != b) adjacency[e.ids[a]].insert(e.ids[b]);
    }
    for (;;) {
      std::vector<std::uint8_t> usable(out.size());
      for (std::size_t i = 0; i < out.size(); ++i) usable[i] = out[i].valid || out[i].filled;
      bool changed = false;
      std::vector<NodeDisplacement> next = out;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (usable[i]) continue;
        double su = 0.0, sv = 0.0;
        int n = 0;
        for (int nb : adjacency[i]) {
          if (!usable[nb]) continue;
          su += out[nb].u;
          sv += out[nb].v;
          ++n;
        }
        if (n == 0) continue;
        next[i].u = su / n;
        next[i].v = sv / n;
        next[i].filled = true;
        changed = true;
      }
      out = std::move(next);
      if (!changed) break;
    }
  }
  return out;
}

inline std::string node_displacements_csv(const std::vector<NodeDisplacement>& nodes) {
  std::string csv = "node_id,x,y,u_px,v_px,peak_r,subpixel,valid,filled\n";
  char line[256];
  for (const NodeDisplacement& d : nodes) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%d,%d\n", d.node_id,
                  d.position.x, d.position.y, d.u, d.v, d.peak_r, d.subpixel ? 1 : 0,
                  d.valid ? 1 : 0, d.filled ? 1 : 0);
    csv += line;
  }
  return csv;
}

}  // namespace dfield

#pragma once

// Discretizes a full-field image into a regular rectangular grid, clips the
// grid to the dilated foreground mask, and refines the boundary cells into
// triangles. The result is a conforming mesh of axis-aligned rectangles and
// triangles whose nodes carry the displacement measurements.
//
// Node id ordering is deterministic: lattice nodes used by surviving
// elements first in row-major order, then boundary intersection nodes in
// cell scan order.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dfield/core.hpp"
#include "dfield/shape.hpp"

namespace dfield {

struct GridSpec {
  int cell_px = 100;
  // Integer-valued lattice origin; pixels left of / above it are not meshed.
  int origin_x = 0;
  int origin_y = 0;
};

struct Node {
  int id = 0;
  PixelCoord position;
};

enum class ElementKind : std::uint8_t { Rect4, Tri3 };

struct Element {
  ElementKind kind = ElementKind::Rect4;
  std::array<int, 4> ids{};  // Tri3 uses the first three
  int node_count() const { return kind == ElementKind::Rect4 ? 4 : 3; }
};

struct Mesh {
  std::vector<Node> nodes;
  std::vector<Element> elements;
  std::vector<std::uint8_t> interior;  // per element: untouched by the boundary
};

struct GridCell {
  int ix = 0, iy = 0;          // lattice cell indices
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct FullGrid {
  std::vector<int> xs, ys;     // node coordinate lines (clipped at the image edge)
  std::vector<Node> nodes;     // row-major over (ys, xs)
  std::vector<GridCell> cells; // row-major
  int ncols() const { return int(xs.size()); }
  int nrows() const { return int(ys.size()); }
  int node_id(int ix, int iy) const { return iy * ncols() + ix; }
};

enum class CellLabel : std::uint8_t { Inside, Boundary, Outside };

inline FullGrid full_grid(int width, int height, const GridSpec& spec) {
  if (spec.cell_px < 1) throw Error("full_grid: cell size must be positive");
  if (spec.origin_x < 0 || spec.origin_y < 0 || spec.origin_x >= width ||
      spec.origin_y >= height)
    throw Error("full_grid: origin outside image");
  FullGrid g;
  for (int x = spec.origin_x; x < width; x += spec.cell_px) g.xs.push_back(x);
  g.xs.push_back(width);
  for (int y = spec.origin_y; y < height; y += spec.cell_px) g.ys.push_back(y);
  g.ys.push_back(height);
  g.nodes.reserve(g.xs.size() * g.ys.size());
  for (int iy = 0; iy < g.nrows(); ++iy)
    for (int ix = 0; ix < g.ncols(); ++ix)
      g.nodes.push_back({g.node_id(ix, iy), {double(g.xs[ix]), double(g.ys[iy])}});
  for (int iy = 0; iy + 1 < g.nrows(); ++iy)
    for (int ix = 0; ix + 1 < g.ncols(); ++ix)
      g.cells.push_back({ix, iy, g.xs[ix], g.ys[iy], g.xs[ix + 1], g.ys[iy + 1]});
  return g;
}

// A cell is inside when its four corners and every mask pixel it covers are
// true, outside when no covered pixel is true, boundary otherwise. Pixel
// cover is half-open: a cell [x0,x1) x [y0,y1) owns pixel centers in that
// range, so adjacent cells never share pixels.
inline std::vector<CellLabel> classify_cells(const FullGrid& grid, const BinaryMask& mask) {
  std::vector<CellLabel> labels(grid.cells.size());
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const GridCell& cell = grid.cells[c];
    bool all = true, any = false;
    for (int y = cell.y0; y < cell.y1; ++y) {
      for (int x = cell.x0; x < cell.x1; ++x) {
        if (mask.at(x, y))
          any = true;
        else
          all = false;
        if (any && !all) break;
      }
      if (any && !all) break;
    }
    if (all) {
      const bool corners = mask.at_clamped(cell.x0, cell.y0) &&
                           mask.at_clamped(cell.x1, cell.y0) &&
                           mask.at_clamped(cell.x1, cell.y1) &&
                           mask.at_clamped(cell.x0, cell.y1);
      labels[c] = corners ? CellLabel::Inside : CellLabel::Boundary;
    } else {
      labels[c] = any ? CellLabel::Boundary : CellLabel::Outside;
    }
  }
  return labels;
}

using Polygon = std::vector<PixelCoord>;

inline double polygon_area(const Polygon& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PixelCoord& a = poly[i];
    const PixelCoord& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

namespace detail {

// First mask transition along an axis-aligned cell edge, scanning pixel by
// pixel from corner a toward corner b. The crossing is placed midway
// between the last sample agreeing with a's state and the first that
// differs, which lands on the 0.25 px grid.
inline PixelCoord edge_crossing(const BinaryMask& mask, PixelCoord a, PixelCoord b) {
  const int len = int(std::abs(b.x - a.x) + std::abs(b.y - a.y));
  const double sx = (b.x - a.x) / len;
  const double sy = (b.y - a.y) / len;
  const bool state0 = mask.at_clamped(int(a.x), int(a.y));
  for (int t = 1; t <= len; ++t) {
    const int px = int(a.x + sx * t);
    const int py = int(a.y + sy * t);
    if (mask.at_clamped(px, py) != state0) {
      const double m = t - 0.5;
      return {a.x + sx * m, a.y + sy * m};
    }
  }
  // Corner states differ, so a transition always exists; keep the far end
  // as a safe fallback against clamping artifacts at the image border.
  return {a.x + sx * (len - 0.5), a.y + sy * (len - 0.5)};
}

}  // namespace detail

// Clips a boundary cell against the mask contour, marching-squares style.
// The result is usually one polygon with 3-5 vertices (triangle, trapezoid
// or pentagon); the ambiguous saddle configuration yields two triangles on
// separate diagonals, and a mask fragment that touches no cell corner
// yields none.
inline std::vector<Polygon> trace_boundary(const GridCell& cell, const BinaryMask& mask) {
  const PixelCoord corner[4] = {{double(cell.x0), double(cell.y0)},
                                {double(cell.x1), double(cell.y0)},
                                {double(cell.x1), double(cell.y1)},
                                {double(cell.x0), double(cell.y1)}};
  bool in[4];
  for (int i = 0; i < 4; ++i) in[i] = mask.at_clamped(int(corner[i].x), int(corner[i].y));
  const int n_in = in[0] + in[1] + in[2] + in[3];

  std::vector<Polygon> polys;
  if (n_in == 0) return polys;
  if (n_in == 4) {
    polys.push_back({corner[0], corner[1], corner[2], corner[3]});
    return polys;
  }
  const bool saddle = n_in == 2 && in[0] == in[2];
  if (saddle) {
    for (int i = 0; i < 4; ++i) {
      if (!in[i]) continue;
      const PixelCoord prev = detail::edge_crossing(mask, corner[i], corner[(i + 3) % 4]);
      const PixelCoord next = detail::edge_crossing(mask, corner[i], corner[(i + 1) % 4]);
      polys.push_back({corner[i], next, prev});
    }
    return polys;
  }
  Polygon poly;
  for (int i = 0; i < 4; ++i) {
    if (in[i]) poly.push_back(corner[i]);
    if (in[i] != in[(i + 1) % 4])
      poly.push_back(detail::edge_crossing(mask, in[i] ? corner[i] : corner[(i + 1) % 4],
                                           in[i] ? corner[(i + 1) % 4] : corner[i]));
  }
  polys.push_back(std::move(poly));
  return polys;
}

// Fan triangulation from vertex 0 of a simple counter-clockwise polygon
// with 3-5 vertices (all clipped cell polygons are convex). Degenerate fan
// triangles from collinear vertices are skipped; the remaining areas sum to
// the polygon area.
inline std::vector<std::array<PixelCoord, 3>> triangulate(const Polygon& poly) {
  if (poly.size() < 3 || poly.size() > 5)
    throw Error("triangulate: polygon must have 3-5 vertices");
  if (polygon_area(poly) <= 0.0)
    throw Error("triangulate: polygon must be counter-clockwise with positive area");
  // Reject self-intersection: test non-adjacent edge pairs.
  const std::size_t n = poly.size();
  auto segments_cross = [](PixelCoord a, PixelCoord b, PixelCoord c, PixelCoord d) {
    const double d1 = doubled_area(c, d, a);
    const double d2 = doubled_area(c, d, b);
    const double d3 = doubled_area(a, b, c);
    const double d4 = doubled_area(a, b, d);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        throw Error("triangulate: self-intersecting polygon");
    }
  }
  std::vector<std::array<PixelCoord, 3>> tris;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const std::array<PixelCoord, 3> tri{poly[0], poly[i], poly[i + 1]};
    if (doubled_area(tri[0], tri[1], tri[2]) > 1e-12) tris.push_back(tri);
  }
  return tris;
}

struct MeshResult {
  Mesh mesh;
  std::vector<std::string> warnings;  // dropped slivers and degenerate cells
};

namespace detail {

struct MeshBuilder {
  const FullGrid& grid;
  // lattice node id -> final id (-1 = unused); boundary points keyed by
  // exact snapped coordinates.
  std::vector<int> lattice_used;
  std::vector<std::pair<long long, long long>> boundary_keys;
  std::map<std::pair<long long, long long>, int> boundary_index;  // key -> order
  struct PendingElement {
    ElementKind kind;
    std::array<int, 4> lattice{};   // >= 0: lattice node id
    std::array<int, 4> boundary{};  // >= 0: boundary point order index
    bool interior = false;
  };
  std::vector<PendingElement> pending;
  std::vector<PixelCoord> boundary_points;

  explicit MeshBuilder(const FullGrid& g) : grid(g), lattice_used(g.nodes.size(), -1) {}

  static std::pair<long long, long long> key_of(PixelCoord p) {
    // Crossings live on the 0.25 px grid, so scaling by 4 gives exact keys.
    return {std::llround(p.x * 4.0), std::llround(p.y * 4.0)};
  }

  int vertex_slot(const GridCell& cell, PixelCoord p, bool& is_lattice) {
    const PixelCoord corners[4] = {{double(cell.x0), double(cell.y0)},
                                   {double(cell.x1), double(cell.y0)},
                                   {double(cell.x1), double(cell.y1)},
                                   {double(cell.x0), double(cell.y1)}};
    const int corner_ids[4] = {grid.node_id(cell.ix, cell.iy),
                               grid.node_id(cell.ix + 1, cell.iy),
                               grid.node_id(cell.ix + 1, cell.iy + 1),
                               grid.node_id(cell.ix, cell.iy + 1)};
    for (int i = 0; i < 4; ++i) {
      // Merge vertices within 0.5 px of a lattice corner into that node.
      if (std::abs(p.x - corners[i].x) < 0.5 && std::abs(p.y - corners[i].y) < 0.5) {
        is_lattice = true;
        return corner_ids[i];
      }
    }
    is_lattice = false;
    const auto key = key_of(p);
    auto it = boundary_index.find(key);
    if (it != boundary_index.end()) return it->second;
    const int idx = int(boundary_points.size());
    boundary_index.emplace(key, idx);
    boundary_points.push_back(p);
    return idx;
  }

  void add_polygon_nodes(const GridCell& cell, const PixelCoord* pts, int n,
                         ElementKind kind, bool interior) {
    PendingElement e;
    e.kind = kind;
    e.interior = interior;
    e.lattice.fill(-1);
    e.boundary.fill(-1);
    for (int i = 0; i < n; ++i) {
      bool lat = false;
      const int slot = vertex_slot(cell, pts[i], lat);
      (lat ? e.lattice[i] : e.boundary[i]) = slot;
    }
    pending.push_back(e);
  }

  MeshResult finish(std::vector<std::string> warnings) {
    // Assign ids: used lattice nodes row-major, then boundary points in
    // first-use order.
    for (const auto& e : pending)
      for (int i = 0; i < 4; ++i)
        if (e.lattice[i] >= 0) lattice_used[e.lattice[i]] = 0;
    Mesh mesh;
    int next = 0;
    for (std::size_t i = 0; i < lattice_used.size(); ++i) {
      if (lattice_used[i] == 0) {
        lattice_used[i] = next++;
        mesh.nodes.push_back({lattice_used[i], grid.nodes[i].position});
      }
    }
    std::vector<int> boundary_ids(boundary_points.size());
    for (std::size_t i = 0; i < boundary_points.size(); ++i) {
      boundary_ids[i] = next++;
      mesh.nodes.push_back({boundary_ids[i], boundary_points[i]});
    }
    for (auto& e : pending) {
      Element out;
      out.kind = e.kind;
      bool degenerate = false;
      for (int i = 0; i < (e.kind == ElementKind::Rect4 ? 4 : 3); ++i) {
        out.ids[i] = e.lattice[i] >= 0 ? lattice_used[e.lattice[i]] : boundary_ids[e.boundary[i]];
        for (int j = 0; j < i; ++j)
          if (out.ids[j] == out.ids[i]) degenerate = true;
      }
      if (degenerate) {
        warnings.push_back("dropped element with merged duplicate nodes");
        continue;
      }
      mesh.elements.push_back(out);
      mesh.interior.push_back(e.interior ? 1 : 0);
    }
    return {std::move(mesh), std::move(warnings)};
  }
};

}  // namespace detail

// End-to-end grid generation: full-size grid, one 3x3 dilation pass of the
// mask, cell classification, boundary clipping and triangulation.
inline MeshResult mesh_structure(const BinaryMask& mask, const GridSpec& spec) {
  if (spec.cell_px < 8) throw Error("mesh_structure: cell size must be at least 8 px");
  const BinaryMask region = largest_component(mask, 8);
  const std::size_t largest_area = region.count();
  if (largest_area == 0) throw Error("mesh_structure: empty foreground");
  if (largest_area < std::size_t(spec.cell_px) * spec.cell_px)
    throw Error("mesh_structure: foreground smaller than one cell");
  int bx0 = mask.width, by0 = mask.height, bx1 = -1, by1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
  if (spec.cell_px > std::min(bx1 - bx0 + 1, by1 - by0 + 1))
    throw Error("mesh_structure: cell size exceeds structure bounding box");

  const BinaryMask dilated = dilate3x3(mask);
  const FullGrid grid = full_grid(mask.width, mask.height, spec);
  const std::vector<CellLabel> labels = classify_cells(grid, dilated);

  detail::MeshBuilder builder(grid);
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const GridCell& cell = grid.cells[c];
    if (labels[c] == CellLabel::Outside) continue;
    if (labels[c] == CellLabel::Inside) {
      const PixelCoord pts[4] = {{double(cell.x0), double(cell.y0)},
                                 {double(cell.x1), double(cell.y0)},
                                 {double(cell.x1), double(cell.y1)},
                                 {double(cell.x0), double(cell.y1)}};
      builder.add_polygon_nodes(cell, pts, 4, ElementKind::Rect4, true);
      continue;
    }
    const auto polys = trace_boundary(cell, dilated);
    if (polys.empty()) {
      warnings.push_back("cell (" + std::to_string(cell.ix) + "," + std::to_string(cell.iy) +
                         "): mask fragment touches no corner, dropped");
      continue;
    }
    for (const Polygon& poly : polys) {
      if (polygon_area(poly) < 4.0) {
        warnings.push_back("cell (" + std::to_string(cell.ix) + "," + std::to_string(cell.iy) +
                           "): dropped sliver polygon");
        continue;
      }
      if (poly.size() == 4 && poly[0].x == cell.x0 && poly[0].y == cell.y0 &&
          poly[2].x == cell.x1 && poly[2].y == cell.y1) {
        builder.add_polygon_nodes(cell, poly.data(), 4, ElementKind::Rect4, false);
        continue;
      }
      for (const auto& tri : triangulate(poly))
        builder.add_polygon_nodes(cell, tri.data(), 3, ElementKind::Tri3, false);
    }
  }
  MeshResult result = builder.finish(std::move(warnings));
  if (result.mesh.elements.empty()) throw Error("mesh_structure: no elements survived clipping");
  return result;
}

inline double element_area(const Mesh& mesh, const Element& e) {
  if (e.kind == ElementKind::Tri3)
    return 0.5 * doubled_area(mesh.nodes[e.ids[0]].position, mesh.nodes[e.ids[1]].position,
                              mesh.nodes[e.ids[2]].position);
  const PixelCoord a = mesh.nodes[e.ids[0]].position;
  const PixelCoord c = mesh.nodes[e.ids[2]].position;
  return (c.x - a.x) * (c.y - a.y);
}

inline nlohmann::ordered_json mesh_to_json(const Mesh& mesh) {
  nlohmann::ordered_json j;
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (const Node& n : mesh.nodes) nodes.push_back({n.position.x, n.position.y});
  auto& elements = j["elements"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
    const Element& e = mesh.elements[i];
    nlohmann::ordered_json je;
    je["kind"] = e.kind == ElementKind::Rect4 ? "rect4" : "tri3";
    je["ids"] = std::vector<int>(e.ids.begin(), e.ids.begin() + e.node_count());
    je["interior"] = bool(mesh.interior[i]);
    elements.push_back(je);
  }
  return j;
}

inline Mesh mesh_from_json(const nlohmann::json& j) {
  Mesh mesh;
  int id = 0;
  for (const auto& jn : j.at("nodes"))
    mesh.nodes.push_back({id++, {jn.at(0).get<double>(), jn.at(1).get<double>()}});
  for (const auto& je : j.at("elements")) {
    Element e;
    const std::string kind = je.at("kind").get<std::string>();
    if (kind == "rect4")
      e.kind = ElementKind::Rect4;
    else if (kind == "tri3")
      e.kind = ElementKind::Tri3;
    else
      throw Error("mesh_from_json: unknown element kind: " + kind);
    const auto& ids = je.at("ids");
    if (int(ids.size()) != e.node_count()) throw Error("mesh_from_json: bad id count");
    for (int i = 0; i < e.node_count(); ++i) {
      e.ids[i] = ids.at(i).get<int>();
      if (e.ids[i] < 0 || e.ids[i] >= int(mesh.nodes.size()))
        throw Error("mesh_from_json: node id out of range");
    }
    mesh.elements.push_back(e);
    mesh.interior.push_back(je.value("interior", false) ? 1 : 0);
  }
  return mesh;
}

}  // namespace dfield

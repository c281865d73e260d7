#pragma once

// Dense displacement field: node displacements carried to every foreground
// sample by the element shape functions, plus the field comparison metrics
//   R = sum(F1*F2) / (sqrt(sum F1^2) * sqrt(sum F2^2))
//   D = sqrt(sum (F1-F2)^2 / count)
// evaluated per component over jointly valid samples.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dfield/core.hpp"
#include "dfield/mesh.hpp"
#include "dfield/nodematch.hpp"
#include "dfield/parallel.hpp"
#include "dfield/shape.hpp"

namespace dfield {

struct DisplacementField {
  int cols = 0, rows = 0;
  double spacing = 10.0;  // px between sample points
  std::vector<double> u, v;
  std::vector<std::uint8_t> valid;
  std::string units = "px";  // "px" or "mm"
  double mm_per_px = 1.0;    // conversion applied when units == "mm"

  std::size_t index(int col, int row) const { return std::size_t(row) * cols + col; }
  double sample_x(int col) const { return col * spacing; }
  double sample_y(int row) const { return row * spacing; }
  std::size_t size() const { return u.size(); }

  static DisplacementField make(int cols, int rows, double spacing) {
    DisplacementField f;
    f.cols = cols;
    f.rows = rows;
    f.spacing = spacing;
    f.u.assign(std::size_t(cols) * rows, 0.0);
    f.v.assign(std::size_t(cols) * rows, 0.0);
    f.valid.assign(std::size_t(cols) * rows, 0);
    return f;
  }
};

enum class FieldComponent { U, V };

namespace detail {

// Point-in-element test with a 1e-9 px boundary tolerance.
inline bool rect_contains(PixelCoord lo, PixelCoord hi, PixelCoord p) {
  constexpr double tol = 1e-9;
  return p.x >= lo.x - tol && p.x <= hi.x + tol && p.y >= lo.y - tol && p.y <= hi.y + tol;
}

inline bool tri_contains(PixelCoord a, PixelCoord b, PixelCoord c, PixelCoord p) {
  constexpr double tol = 1e-9;
  auto side = [&](PixelCoord e0, PixelCoord e1) {
    const double cross = doubled_area(e0, e1, p);
    const double len = std::hypot(e1.x - e0.x, e1.y - e0.y);
    return cross >= -tol * std::max(len, 1.0);
  };
  return side(a, b) && side(b, c) && side(c, a);
}

struct ElementGeom {
  PixelCoord lo, hi;  // bbox; for Rect4 also the element extents
};

inline ElementGeom element_geom(const Mesh& mesh, const Element& e) {
  ElementGeom g{{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()},
                {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()}};
  for (int i = 0; i < e.node_count(); ++i) {
    const PixelCoord p = mesh.nodes[e.ids[i]].position;
    g.lo.x = std::min(g.lo.x, p.x);
    g.lo.y = std::min(g.lo.y, p.y);
    g.hi.x = std::max(g.hi.x, p.x);
    g.hi.y = std::max(g.hi.y, p.y);
  }
  return g;
}

}  // namespace detail

// Locates the element containing p. Candidates are checked in element-id
// order so shared edges resolve to the lowest id deterministically.
class ElementLocator {
 public:
  explicit ElementLocator(const Mesh& mesh) : mesh_(mesh) {
    double max_extent = 1.0;
    geoms_.reserve(mesh.elements.size());
    for (const Element& e : mesh.elements) {
      geoms_.push_back(detail::element_geom(mesh, e));
      max_extent = std::max({max_extent, geoms_.back().hi.x - geoms_.back().lo.x,
                             geoms_.back().hi.y - geoms_.back().lo.y});
    }
    bucket_ = max_extent;
    for (int i = 0; i < int(mesh.elements.size()); ++i) {
      const auto& g = geoms_[i];
      for (int by = int(g.lo.y / bucket_); by <= int(g.hi.y / bucket_); ++by)
        for (int bx = int(g.lo.x / bucket_); bx <= int(g.hi.x / bucket_); ++bx)
          buckets_[{bx, by}].push_back(i);
    }
    for (auto& [key, ids] : buckets_) std::sort(ids.begin(), ids.end());
  }

  // Returns the lowest element id containing p, or -1.
  int locate(PixelCoord p) const {
    const auto it = buckets_.find({int(p.x / bucket_), int(p.y / bucket_)});
    if (it == buckets_.end()) return -1;
    for (int id : it->second)
      if (contains(id, p)) return id;
    return -1;
  }

  bool contains(int id, PixelCoord p) const {
    const Element& e = mesh_.elements[id];
    const auto& g = geoms_[id];
    if (e.kind == ElementKind::Rect4) return detail::rect_contains(g.lo, g.hi, p);
    if (!detail::rect_contains(g.lo, g.hi, p)) return false;
    return detail::tri_contains(mesh_.nodes[e.ids[0]].position, mesh_.nodes[e.ids[1]].position,
                                mesh_.nodes[e.ids[2]].position, p);
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::pair<int, int>& k) const {
      return std::hash<long long>()((static_cast<long long>(k.first) << 32) ^
                                    static_cast<unsigned>(k.second));
    }
  };
  const Mesh& mesh_;
  std::vector<detail::ElementGeom> geoms_;
  double bucket_ = 1.0;
  std::unordered_map<std::pair<int, int>, std::vector<int>, KeyHash> buckets_;
};

// Shape-function interpolation of the nodal displacement vectors at p,
// which must lie inside the element (1e-9 px boundary tolerance).
inline std::pair<double, double> interpolate_element(const Mesh& mesh, const Element& e,
                                                     const std::vector<NodeDisplacement>& nodes,
                                                     PixelCoord p) {
  if (e.kind == ElementKind::Rect4) {
    const auto g = detail::element_geom(mesh, e);
    if (!detail::rect_contains(g.lo, g.hi, p)) throw Error("interpolate: point outside element");
    const NaturalCoord nc = rect_natural(g.lo.x, g.lo.y, g.hi.x, g.hi.y, p);
    const auto n = rect_shape(nc.xi, nc.eta);
    double u = 0.0, v = 0.0;
    for (int i = 0; i < 4; ++i) {
      u += n[i] * nodes[e.ids[i]].u;
      v += n[i] * nodes[e.ids[i]].v;
    }
    return {u, v};
  }
  const PixelCoord a = mesh.nodes[e.ids[0]].position;
  const PixelCoord b = mesh.nodes[e.ids[1]].position;
  const PixelCoord c = mesh.nodes[e.ids[2]].position;
  if (!detail::tri_contains(a, b, c, p)) throw Error("interpolate: point outside element");
  const AreaCoord l = tri_area_coords(a, b, c, p);
  return {l.li * nodes[e.ids[0]].u + l.lj * nodes[e.ids[1]].u + l.lk * nodes[e.ids[2]].u,
          l.li * nodes[e.ids[0]].v + l.lj * nodes[e.ids[1]].v + l.lk * nodes[e.ids[2]].v};
}

// Samples the interpolated field on a regular grid over the mask. A sample
// is valid when it falls on the (dilated) foreground, lies in some element,
// and every node of that element carries a measured or filled value.
inline DisplacementField assemble_field(const Mesh& mesh,
                                        const std::vector<NodeDisplacement>& nodes,
                                        double spacing, const BinaryMask& mask,
                                        int threads = 1) {
  if (spacing < 1.0) throw Error("assemble_field: spacing must be >= 1 px");
  for (const Element& e : mesh.elements)
    for (int i = 0; i < e.node_count(); ++i)
      if (e.ids[i] < 0 || e.ids[i] >= int(nodes.size()))
        throw Error("assemble_field: node displacement list does not cover the mesh");
  const int cols = int((mask.width - 1) / spacing) + 1;
  const int rows = int((mask.height - 1) / spacing) + 1;
  DisplacementField f = DisplacementField::make(cols, rows, spacing);
  std::vector<std::uint8_t> usable(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) usable[i] = nodes[i].valid || nodes[i].filled;
  const ElementLocator locator(mesh);
  parallel_for(rows, threads, [&](std::int64_t row) {
    for (int col = 0; col < cols; ++col) {
      const PixelCoord p{f.sample_x(col), f.sample_y(int(row))};
      if (!mask.at_clamped(int(std::lround(p.x)), int(std::lround(p.y)))) continue;
      const int id = locator.locate(p);
      if (id < 0) continue;
      const Element& e = mesh.elements[id];
      bool ok = true;
      for (int i = 0; i < e.node_count(); ++i) ok = ok && usable[e.ids[i]];
      if (!ok) continue;
      const auto [u, v] = interpolate_element(mesh, e, nodes, p);
      const std::size_t idx = f.index(col, int(row));
      f.u[idx] = u;
      f.v[idx] = v;
      f.valid[idx] = 1;
    }
  });
  return f;
}

namespace detail {
inline void check_same_grid(const DisplacementField& a, const DisplacementField& b) {
  if (a.cols != b.cols || a.rows != b.rows || a.spacing != b.spacing)
    throw Error("field metric: sample grids differ");
  if (a.units != b.units) throw Error("field metric: units differ (" + a.units + " vs " + b.units + ")");
}
}  // namespace detail

// Normalized correlation of one displacement component over jointly valid
// samples; nullopt when either side is identically zero there.
inline std::optional<double> metric_R(const DisplacementField& a, const DisplacementField& b,
                                      FieldComponent comp) {
  detail::check_same_grid(a, b);
  const auto& fa = comp == FieldComponent::U ? a.u : a.v;
  const auto& fb = comp == FieldComponent::U ? b.u : b.v;
  double cross = 0.0, na = 0.0, nb = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    cross += fa[i] * fb[i];
    na += fa[i] * fa[i];
    nb += fb[i] * fb[i];
    ++count;
  }
  if (count == 0 || na <= 0.0 || nb <= 0.0) return std::nullopt;
  return cross / (std::sqrt(na) * std::sqrt(nb));
}

// Root mean square deviation of one component over jointly valid samples.
inline std::optional<double> metric_D(const DisplacementField& a, const DisplacementField& b,
                                      FieldComponent comp) {
  detail::check_same_grid(a, b);
  const auto& fa = comp == FieldComponent::U ? a.u : a.v;
  const auto& fb = comp == FieldComponent::U ? b.u : b.v;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    const double d = fa[i] - fb[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / double(count));
}

inline DisplacementField scale_to_mm(DisplacementField field, double mm_per_px) {
  if (!(mm_per_px > 0.0)) throw Error("scale_to_mm: coefficient must be positive");
  for (auto& x : field.u) x *= mm_per_px;
  for (auto& x : field.v) x *= mm_per_px;
  field.units = "mm";
  field.mm_per_px = mm_per_px;
  return field;
}

inline std::string field_csv(const DisplacementField& f) {
  std::string csv = "x_px,y_px,u,v,valid,units\n";
  char line[192];
  for (int row = 0; row < f.rows; ++row) {
    for (int col = 0; col < f.cols; ++col) {
      const std::size_t i = f.index(col, row);
      std::snprintf(line, sizeof(line), "%.10g,%.10g,%.12g,%.12g,%d,%s\n", f.sample_x(col),
                    f.sample_y(row), f.u[i], f.v[i], f.valid[i] ? 1 : 0, f.units.c_str());
      csv += line;
    }
  }
  return csv;
}

inline DisplacementField field_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("x_px,y_px,u,v,valid,units", 0) != 0)
    throw Error("field_from_csv: bad header");
  struct Row {
    double x, y, u, v;
    int valid;
    std::string units;
  };
  std::vector<Row> rowsv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r;
    char units[16] = {};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%d,%15s", &r.x, &r.y, &r.u, &r.v, &r.valid,
                    units) != 6)
      throw Error("field_from_csv: bad row: " + line);
    r.units = units;
    rowsv.push_back(r);
  }
  if (rowsv.empty()) throw Error("field_from_csv: no samples");
  int cols = 0;
  while (cols < int(rowsv.size()) && rowsv[cols].y == rowsv[0].y) ++cols;
  const int rows = int(rowsv.size()) / cols;
  if (rows * cols != int(rowsv.size())) throw Error("field_from_csv: ragged grid");
  DisplacementField f = DisplacementField::make(cols, rows, cols > 1 ? rowsv[1].x - rowsv[0].x
                                                                     : (rows > 1 ? rowsv[cols].y : 1.0));
  f.units = rowsv[0].units;
  for (std::size_t i = 0; i < rowsv.size(); ++i) {
    f.u[i] = rowsv[i].u;
    f.v[i] = rowsv[i].v;
    f.valid[i] = rowsv[i].valid ? 1 : 0;
  }
  return f;
}

struct FieldReport {
  std::optional<double> r_u, r_v, d_u, d_v;
  std::string units;
  double valid_fraction = 0.0;
};

inline FieldReport compare_fields(const DisplacementField& a, const DisplacementField& b) {
  FieldReport rep;
  rep.r_u = metric_R(a, b, FieldComponent::U);
  rep.r_v = metric_R(a, b, FieldComponent::V);
  rep.d_u = metric_D(a, b, FieldComponent::U);
  rep.d_v = metric_D(a, b, FieldComponent::V);
  rep.units = a.units;
  std::size_t joint = 0;
  for (std::size_t i = 0; i < a.valid.size(); ++i) joint += (a.valid[i] && b.valid[i]) ? 1 : 0;
  rep.valid_fraction = a.valid.empty() ? 0.0 : double(joint) / double(a.valid.size());
  return rep;
}

inline nlohmann::ordered_json report_to_json(const FieldReport& rep) {
  nlohmann::ordered_json j;
  auto set = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  set("R_u", rep.r_u);
  set("R_v", rep.r_v);
  set("D_u", rep.d_u);
  set("D_v", rep.d_v);
  j["units"] = rep.units;
  j["valid_fraction"] = rep.valid_fraction;
  return j;
}

// Blue-white-red rendering of one component for quick inspection; invalid
// samples are dark gray.
inline RgbImage render_heatmap(const DisplacementField& f, FieldComponent comp) {
  const auto& vals = comp == FieldComponent::U ? f.u : f.v;
  double peak = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (f.valid[i]) peak = std::max(peak, std::abs(vals[i]));
  if (peak == 0.0) peak = 1.0;
  RgbImage img(f.cols, f.rows, {0.15, 0.15, 0.15});
  for (int row = 0; row < f.rows; ++row) {
    for (int col = 0; col < f.cols; ++col) {
      const std::size_t i = f.index(col, row);
      if (!f.valid[i]) continue;
      const double t = std::clamp(vals[i] / peak, -1.0, 1.0);
      if (t >= 0.0)
        img.at(col, row) = {1.0, 1.0 - t, 1.0 - t};
      else
        img.at(col, row) = {1.0 + t, 1.0 + t, 1.0};
    }
  }
  return img;
}

}  // namespace dfield

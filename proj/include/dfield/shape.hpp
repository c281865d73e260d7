#pragma once

// Element-local interpolation bases: the bilinear rectangle on natural
// coordinates (xi, eta) in [-1,1]^2 and the linear triangle on area
// coordinates. Both satisfy the Kronecker-delta property at nodes and
// partition of unity, so nodal sampling of any affine field is reproduced
// exactly inside the element.

#include <array>
#include <cmath>

#include "dfield/core.hpp"

namespace dfield {

struct NaturalCoord {
  double xi = 0.0;
  double eta = 0.0;
};

struct AreaCoord {
  double li = 0.0;
  double lj = 0.0;
  double lk = 0.0;
};

// Bilinear shape functions for the corner numbering
//   1:(-1,-1)  2:(1,-1)  3:(1,1)  4:(-1,1).
inline std::array<double, 4> rect_shape(double xi, double eta) {
  return {0.25 * (xi - 1.0) * (eta - 1.0), -0.25 * (xi + 1.0) * (eta - 1.0),
          0.25 * (xi + 1.0) * (eta + 1.0), -0.25 * (xi - 1.0) * (eta + 1.0)};
}

// Affine map sending an axis-aligned rectangle [x0,x1]x[y0,y1] onto the
// natural square, corner (x0,y0) -> (-1,-1), corner (x1,y1) -> (1,1).
inline NaturalCoord rect_natural(double x0, double y0, double x1, double y1,
                                 PixelCoord p) {
  const double w = x1 - x0;
  const double h = y1 - y0;
  if (w <= 0.0 || h <= 0.0) throw Error("rect_natural: zero-extent element");
  return {2.0 * (p.x - x0) / w - 1.0, 2.0 * (p.y - y0) / h - 1.0};
}

// Signed doubled triangle area (shoelace); positive for the node ordering
// used by the mesher.
inline double doubled_area(PixelCoord a, PixelCoord b, PixelCoord c) {
  return (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
}

// Area (barycentric) coordinates L_l = (a_l + b_l x + c_l y) / (2*area)
// with the cyclic coefficients a_i = x_j*y_k - x_k*y_j, b_i = y_j - y_k,
// c_i = x_k - x_j. L_i + L_j + L_k = 1; all three lie in [0,1] exactly when
// p is inside the triangle.
inline AreaCoord tri_area_coords(PixelCoord pi, PixelCoord pj, PixelCoord pk,
                                 PixelCoord p) {
  const double two_area = doubled_area(pi, pj, pk);
  if (std::abs(two_area) <= 2e-9) throw Error("tri_area_coords: degenerate triangle");
  auto coord = [&](PixelCoord a, PixelCoord b) {
    return ((a.x * b.y - b.x * a.y) + (a.y - b.y) * p.x + (b.x - a.x) * p.y) / two_area;
  };
  return {coord(pj, pk), coord(pk, pi), coord(pi, pj)};
}

}  // namespace dfield

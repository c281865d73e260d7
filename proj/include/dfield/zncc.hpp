#pragma once

// Zero-mean normalized cross-correlation template matching. The correlation
// of a template with every integer offset of a search window yields a
// surface whose peak locates the node in the deformed image; an optional
// per-axis parabola fit refines the peak below one pixel.
//
// The correlation value for a window S and template T is
//   R = sum[(S - S_av)(T - T_av)] / (sqrt(sum (S - S_av)^2) * sqrt(sum (T - T_av)^2))
// with the plain means S_av, T_av over the window. Windows or templates with
// ~zero variance have no defined correlation and are flagged, never folded
// into 0 or NaN.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dfield/core.hpp"

namespace dfield {

struct Template {
  GrayImage patch;    // odd dimensions, centered on the node
  PixelCoord center;  // node position in the reference image
  double mean = 0.0;
};

// Extracts an odd-sized patch centered at `center`, bilinearly sampled so
// fractional node positions keep their sub-pixel phase. Returns nullopt when
// the patch is not fully inside the image.
inline std::optional<Template> extract_template(const GrayImage& ref, PixelCoord center,
                                                int size_x, int size_y) {
  if (size_x < 3 || size_y < 3 || size_x % 2 == 0 || size_y % 2 == 0)
    throw Error("extract_template: template dimensions must be odd and >= 3");
  const int hx = size_x / 2, hy = size_y / 2;
  if (center.x - hx < 0.0 || center.x + hx > ref.width - 1 || center.y - hy < 0.0 ||
      center.y + hy > ref.height - 1)
    return std::nullopt;
  Template t;
  t.patch = GrayImage(size_x, size_y);
  t.center = center;
  double sum = 0.0;
  for (int j = 0; j < size_y; ++j) {
    for (int i = 0; i < size_x; ++i) {
      const double v = *bilinear_sample(ref, {center.x + i - hx, center.y + j - hy});
      t.patch.at(i, j) = v;
      sum += v;
    }
  }
  t.mean = sum / (double(size_x) * size_y);
  return t;
}

namespace detail {
// Variance guard: sums of squared deviations below this are treated as
// constant signal (undefined correlation).
inline double variance_floor(std::size_t n) { return 1e-14 * double(n); }
}  // namespace detail

// Correlation of two equally sized patches; nullopt when either side has no
// variance.
inline std::optional<double> zncc(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error("zncc: operand dimensions differ");
  const std::size_t n = a.data.size();
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a.data[i];
    sb += b.data[i];
  }
  const double ma = sa / double(n), mb = sb / double(n);
  double cross = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.data[i] - ma;
    const double db = b.data[i] - mb;
    cross += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= detail::variance_floor(n) || vb <= detail::variance_floor(n)) return std::nullopt;
  const double r = cross / (std::sqrt(va) * std::sqrt(vb));
  return std::clamp(r, -1.0, 1.0);
}

inline std::optional<double> zncc(const Template& t, const GrayImage& window) {
  return zncc(t.patch, window);
}

struct CorrelationSurface {
  int radius = 0;
  std::vector<double> values;          // (2r+1)^2 row-major by (dv, du)
  std::vector<std::uint8_t> defined;
  bool clipped = false;                // search region hit the image border

  int side() const { return 2 * radius + 1; }
  std::size_t index(int du, int dv) const {
    return std::size_t(dv + radius) * side() + (du + radius);
  }
  bool is_defined(int du, int dv) const { return defined[index(du, dv)] != 0; }
  double value(int du, int dv) const { return values[index(du, dv)]; }
  bool any_defined() const {
    for (auto d : defined)
      if (d) return true;
    return false;
  }
};

// Evaluates R at every integer offset within +-radius of the template
// center. Offsets whose window leaves the deformed image are undefined and
// the surface is marked clipped.
inline CorrelationSurface correlate(const Template& t, const GrayImage& deformed, int radius) {
  if (radius < 1) throw Error("correlate: radius must be positive");
  const int mx = t.patch.width, my = t.patch.height;
  const int hx = mx / 2, hy = my / 2;
  const std::size_t n = std::size_t(mx) * my;
  CorrelationSurface surf;
  surf.radius = radius;
  surf.values.assign(std::size_t(surf.side()) * surf.side(),
                     std::numeric_limits<double>::quiet_NaN());
  surf.defined.assign(surf.values.size(), 0);

  double t_var = 0.0;
  for (double v : t.patch.data) {
    const double d = v - t.mean;
    t_var += d * d;
  }
  if (t_var <= detail::variance_floor(n)) return surf;  // constant template
  const double t_norm = std::sqrt(t_var);

  // Search region: template footprint padded by the radius, pulled from the
  // deformed image at the node's fractional phase.
  const int rw = mx + 2 * radius, rh = my + 2 * radius;
  const double ox = t.center.x - hx - radius;
  const double oy = t.center.y - hy - radius;
  GrayImage region(rw, rh);
  std::vector<std::uint8_t> region_ok(region.data.size(), 0);
  bool full = true;
  for (int j = 0; j < rh; ++j) {
    for (int i = 0; i < rw; ++i) {
      const auto v = bilinear_sample(deformed, {ox + i, oy + j});
      if (v) {
        region.at(i, j) = *v;
        region_ok[std::size_t(j) * rw + i] = 1;
      } else {
        full = false;
      }
    }
  }
  surf.clipped = !full;

  // Running sums over the region make the window mean and variance O(1)
  // per offset; the cross term stays an explicit loop over the template.
  std::vector<double> int1(std::size_t(rw + 1) * (rh + 1), 0.0);
  std::vector<double> int2(int1.size(), 0.0);
  for (int j = 0; j < rh; ++j) {
    for (int i = 0; i < rw; ++i) {
      const double v = region.at(i, j);
      const std::size_t idx = std::size_t(j + 1) * (rw + 1) + (i + 1);
      int1[idx] = v + int1[idx - 1] + int1[idx - rw - 1] - int1[idx - rw - 2];
      int2[idx] = v * v + int2[idx - 1] + int2[idx - rw - 1] - int2[idx - rw - 2];
    }
  }
  auto box = [&](const std::vector<double>& s, int x0, int y0, int x1, int y1) {
    return s[std::size_t(y1 + 1) * (rw + 1) + (x1 + 1)] -
           s[std::size_t(y0) * (rw + 1) + (x1 + 1)] -
           s[std::size_t(y1 + 1) * (rw + 1) + x0] + s[std::size_t(y0) * (rw + 1) + x0];
  };
  auto window_complete = [&](int x0, int y0) {
    if (full) return true;
    for (int j = 0; j < my; ++j)
      for (int i = 0; i < mx; ++i)
        if (!region_ok[std::size_t(y0 + j) * rw + (x0 + i)]) return false;
    return true;
  };

  for (int dv = -radius; dv <= radius; ++dv) {
    for (int du = -radius; du <= radius; ++du) {
      const int x0 = du + radius, y0 = dv + radius;
      if (!window_complete(x0, y0)) continue;
      const double sum_s = box(int1, x0, y0, x0 + mx - 1, y0 + my - 1);
      const double sum_s2 = box(int2, x0, y0, x0 + mx - 1, y0 + my - 1);
      const double s_var = sum_s2 - sum_s * sum_s / double(n);
      // relative guard absorbs the cancellation noise of the running sums
      if (s_var <= detail::variance_floor(n) + 1e-10 * sum_s2) continue;
      double cross = 0.0;
      for (int j = 0; j < my; ++j) {
        const double* srow = &region.data[std::size_t(y0 + j) * rw + x0];
        const double* trow = &t.patch.data[std::size_t(j) * mx];
        double acc = 0.0;
        for (int i = 0; i < mx; ++i) acc += srow[i] * trow[i];
        cross += acc;
      }
      const double num = cross - sum_s * t.mean;  // sum_t == n * t.mean
      const double r = num / (std::sqrt(s_var) * t_norm);
      surf.values[surf.index(du, dv)] = std::clamp(r, -1.0, 1.0);
      surf.defined[surf.index(du, dv)] = 1;
    }
  }
  return surf;
}

struct Peak {
  int du = 0, dv = 0;
  double r = 0.0;
};

// Argmax over defined entries. Ties prefer the smaller offset magnitude,
// then the earlier entry in row-major scan order.
inline std::optional<Peak> peak(const CorrelationSurface& surf) {
  std::optional<Peak> best;
  for (int dv = -surf.radius; dv <= surf.radius; ++dv) {
    for (int du = -surf.radius; du <= surf.radius; ++du) {
      if (!surf.is_defined(du, dv)) continue;
      const double r = surf.value(du, dv);
      if (!best || r > best->r ||
          (r == best->r && du * du + dv * dv < best->du * best->du + best->dv * best->dv))
        best = Peak{du, dv, r};
    }
  }
  return best;
}

struct Refinement {
  double du = 0.0, dv = 0.0;
  bool refined = false;
};

// Independent 1-D parabola fits through the three samples in x and in y:
// offset = (R- - R+) / (2 (R- - 2 R0 + R+)) per axis, clamped to (-0.5, 0.5).
// Peaks on the surface border or with incomplete/flat neighborhoods are left
// unrefined.
inline Refinement subpixel_refine(const CorrelationSurface& surf, const Peak& p) {
  if (std::abs(p.du) >= surf.radius || std::abs(p.dv) >= surf.radius) return {};
  for (int j = -1; j <= 1; ++j)
    for (int i = -1; i <= 1; ++i)
      if (!surf.is_defined(p.du + i, p.dv + j)) return {};
  auto axis = [&](double rm, double r0, double rp) -> std::optional<double> {
    const double denom = rm - 2.0 * r0 + rp;
    if (std::abs(denom) < 1e-15) return std::nullopt;
    return std::clamp((rm - rp) / (2.0 * denom), -0.5, 0.5);
  };
  const auto dx = axis(surf.value(p.du - 1, p.dv), p.r, surf.value(p.du + 1, p.dv));
  const auto dy = axis(surf.value(p.du, p.dv - 1), p.r, surf.value(p.du, p.dv + 1));
  if (!dx || !dy) return {};
  return {*dx, *dy, true};
}

}  // namespace dfield

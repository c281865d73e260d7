#pragma once

// Independent reference implementations used only by the tests: brute-force
// scans and closed-form evaluations that the optimized library code is
// checked against. None of these call the code paths they verify.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/rng.hpp"

namespace oracle {

// Naive double-loop zero-mean normalized cross-correlation.
inline std::optional<double> zncc_naive(const dfield::GrayImage& t, const dfield::GrayImage& s) {
  const std::size_t n = t.data.size();
  double mt = 0.0, ms = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += t.data[i];
    ms += s.data[i];
  }
  mt /= double(n);
  ms /= double(n);
  double num = 0.0, dt = 0.0, ds = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (s.data[i] - ms) * (t.data[i] - mt);
    dt += (t.data[i] - mt) * (t.data[i] - mt);
    ds += (s.data[i] - ms) * (s.data[i] - ms);
  }
  if (dt <= 1e-14 * double(n) || ds <= 1e-14 * double(n)) return std::nullopt;
  return num / (std::sqrt(ds) * std::sqrt(dt));
}

// Brute-force 3x3 dilation by scanning every neighborhood.
inline dfield::BinaryMask dilate_naive(const dfield::BinaryMask& m) {
  dfield::BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool v = false;
      for (int j = y - 1; j <= y + 1; ++j)
        for (int i = x - 1; i <= x + 1; ++i)
          if (i >= 0 && i < m.width && j >= 0 && j < m.height && m.at(i, j)) v = true;
      out.at(x, y) = v ? 1 : 0;
    }
  return out;
}

// Shoelace polygon area.
inline double shoelace(const std::vector<dfield::PixelCoord>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

// Exhaustive exact two nearest neighbors by linear scan; ties broken toward
// the lower index, matching the tree contract.
struct TwoNearest {
  int first = -1, second = -1;
  double d1 = 0.0, d2 = 0.0;
};
template <typename DistFn>
TwoNearest two_nearest_scan(std::size_t n, DistFn&& dist) {
  TwoNearest r;
  double best1 = std::numeric_limits<double>::max();
  double best2 = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dist(i);
    if (d < best1 || (d == best1 && int(i) < r.first)) {
      best2 = best1;
      r.second = r.first;
      best1 = d;
      r.first = int(i);
    } else if (d < best2 || (d == best2 && int(i) < r.second)) {
      best2 = d;
      r.second = int(i);
    }
  }
  r.d1 = best1;
  r.d2 = best2;
  return r;
}

// Smooth random blob masks: unions of random ellipses on an otherwise empty
// canvas, features sized well above the mesh cells that sample them.
inline dfield::BinaryMask random_blob_mask(int w, int h, dfield::Rng& rng, int n_blobs = 3,
                                           double min_radius_frac = 0.18,
                                           double max_radius_frac = 0.38) {
  dfield::BinaryMask m(w, h);
  for (int b = 0; b < n_blobs; ++b) {
    const double cx = rng.uniform(0.25 * w, 0.75 * w);
    const double cy = rng.uniform(0.25 * h, 0.75 * h);
    const double rx = rng.uniform(min_radius_frac, max_radius_frac) * w;
    const double ry = rng.uniform(min_radius_frac, max_radius_frac) * h;
    const double rot = rng.uniform(0.0, 3.14159265);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double ex = (cr * dx + sr * dy) / rx;
        const double ey = (-sr * dx + cr * dy) / ry;
        if (ex * ex + ey * ey <= 1.0) m.at(x, y) = 1;
      }
  }
  return m;
}

}  // namespace oracle

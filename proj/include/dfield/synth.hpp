#pragma once

// Synthetic-scene oracle: a speckle-textured cantilever beam rendered on a
// distinct background, deformed by the closed-form Euler-Bernoulli curve
//   w(x) = P x^2 (3L - x) / (6 E I),   fixed end at x = 0, downward positive,
// and sliced into overlapping views. Every stage of the measurement
// pipeline can be checked against this exact ground truth. All generators
// are seed-deterministic.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/field.hpp"
#include "dfield/homography.hpp"
#include "dfield/rng.hpp"

namespace dfield {

struct BeamSpec {
  double length_mm = 2644.0;
  double height_mm = 400.0;
  double elastic_modulus = 3200.0;    // N/mm^2
  double second_moment_mm4 = 1.6e8;   // mm^4
  double tip_load_n = 0.0;            // N, downward
};

struct SceneSpec {
  int canvas_width = 2000;
  int canvas_height = 600;
  double mm_per_px = 1.4;
  std::uint64_t texture_seed = 1;
  std::string background = "gradient";  // or "noise"
  double speckle_cell_px = 6.0;         // feature size of the beam texture
  double noise_sigma = 0.0;             // optional luminance perturbation
};

inline double cantilever_deflection(double x_mm, const BeamSpec& beam) {
  if (x_mm < 0.0 || x_mm > beam.length_mm)
    throw Error("cantilever_deflection: x outside [0, L]");
  const double ei = beam.elastic_modulus * beam.second_moment_mm4;
  return beam.tip_load_n * x_mm * x_mm * (3.0 * beam.length_mm - x_mm) / (6.0 * ei);
}

// Tip load producing a given tip deflection in pixels at the scene scale.
inline double load_for_tip_px(double tip_px, const BeamSpec& beam, const SceneSpec& scene) {
  const double ei = beam.elastic_modulus * beam.second_moment_mm4;
  const double tip_mm = tip_px * scene.mm_per_px;
  return tip_mm * 3.0 * ei / (beam.length_mm * beam.length_mm * beam.length_mm);
}

struct BeamLayout {
  double x0, y0, x1, y1;  // beam rectangle in canvas pixels
};

inline BeamLayout beam_layout(const BeamSpec& beam, const SceneSpec& scene) {
  const double bw = beam.length_mm / scene.mm_per_px;
  const double bh = beam.height_mm / scene.mm_per_px;
  if (bw + 2 >= scene.canvas_width || bh + 2 >= scene.canvas_height)
    throw Error("beam_layout: beam larger than canvas");
  const double x0 = (scene.canvas_width - bw) / 2.0;
  const double y0 = (scene.canvas_height - bh) / 2.0;
  return {x0, y0, x0 + bw, y0 + bh};
}

namespace detail {

// Continuous seeded value noise: uniform lattice values interpolated with a
// smoothstep kernel, sampled at arbitrary real coordinates.
struct SpeckleTexture {
  std::uint64_t seed;
  double cell;

  double lattice(long long i, long long j) const {
    const std::uint64_t k =
        splitmix64(seed ^ (std::uint64_t(i) * 0x9e3779b97f4a7c15ULL) ^
                   (std::uint64_t(j) * 0xc2b2ae3d27d4eb4fULL));
    return double(k >> 11) * 0x1.0p-53;
  }

  double operator()(double x, double y) const {
    const double gx = x / cell, gy = y / cell;
    const long long ix = (long long)std::floor(gx), iy = (long long)std::floor(gy);
    double tx = gx - ix, ty = gy - iy;
    tx = tx * tx * (3.0 - 2.0 * tx);
    ty = ty * ty * (3.0 - 2.0 * ty);
    const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
    const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
    const double v = (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
    // contrast stretch for trackable speckle
    return std::clamp(0.5 + 2.5 * (v - 0.5), 0.05, 0.95);
  }
};

inline Rgb beam_color(double speckle) {
  return {0.15 + 0.80 * speckle, 0.12 + 0.68 * speckle, 0.08 + 0.45 * speckle};
}

inline Rgb background_color(const SceneSpec& scene, double x, double y) {
  const SpeckleTexture slow{derive_seed(scene.texture_seed, 0xB6), 40.0};
  const double t = y / std::max(1, scene.canvas_height - 1);
  const double m = scene.background == "noise" ? 0.12 * (slow(x, y) - 0.5) : 0.04 * (slow(x, y) - 0.5);
  return {0.26 + 0.06 * t + m, 0.38 + 0.08 * t + m, 0.62 + 0.10 * t + m};
}

}  // namespace detail

// Deflection of the column through canvas x, in pixels; zero outside the
// beam's horizontal extent.
inline double column_deflection_px(double x, const BeamSpec& beam, const SceneSpec& scene,
                                   const BeamLayout& layout) {
  if (x < layout.x0 - 0.5 || x > layout.x1 + 0.5) return 0.0;
  const double x_mm = std::clamp((x - layout.x0) * scene.mm_per_px, 0.0, beam.length_mm);
  return cantilever_deflection(x_mm, beam) / scene.mm_per_px;
}

// Renders the scene with the beam deformed by its tip load; a zero load
// gives the reference state. Material at (x, y) moves to (x, y + w(x)), so
// the output pixel q pulls the texture back from (q.x, q.y - w(q.x)).
inline RgbImage render_scene(const BeamSpec& beam, const SceneSpec& scene) {
  const BeamLayout layout = beam_layout(beam, scene);
  const detail::SpeckleTexture speckle{scene.texture_seed, scene.speckle_cell_px};
  RgbImage img(scene.canvas_width, scene.canvas_height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = column_deflection_px(x, beam, scene, layout);
      const double sy = y - v;
      if (x >= layout.x0 && x <= layout.x1 && sy >= layout.y0 && sy <= layout.y1)
        img.at(x, y) = detail::beam_color(speckle(x, sy));
      else
        img.at(x, y) = detail::background_color(scene, x, y);
    }
  }
  if (scene.noise_sigma > 0.0) {
    Rng rng(derive_seed(scene.texture_seed, 0x401e));
    for (auto& c : img.data) {
      const double d = rng.normal() * scene.noise_sigma;
      c.r = std::clamp(c.r + d, 0.0, 1.0);
      c.g = std::clamp(c.g + d, 0.0, 1.0);
      c.b = std::clamp(c.b + d, 0.0, 1.0);
    }
  }
  return img;
}

// Reference render plus the exact foreground mask.
inline std::pair<RgbImage, BinaryMask> render_beam(const BeamSpec& beam, const SceneSpec& scene) {
  BeamSpec unloaded = beam;
  unloaded.tip_load_n = 0.0;
  RgbImage img = render_scene(unloaded, scene);
  const BeamLayout layout = beam_layout(beam, scene);
  BinaryMask mask(scene.canvas_width, scene.canvas_height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      mask.at(x, y) =
          (x >= layout.x0 && x <= layout.x1 && y >= layout.y0 && y <= layout.y1) ? 1 : 0;
  return {std::move(img), std::move(mask)};
}

struct GroundTruth {
  DisplacementField field;  // px units, defined on the reference mask
  BinaryMask mask;          // reference-state foreground
  double mm_per_px = 1.0;   // conversion coefficient of the scene
};

// Exact displacement field sampled on the measurement grid: v from the
// closed form (downward positive), u identically zero.
inline GroundTruth analytic_field(const BeamSpec& beam, const SceneSpec& scene, double spacing) {
  const BeamLayout layout = beam_layout(beam, scene);
  GroundTruth truth;
  truth.mm_per_px = scene.mm_per_px;
  truth.mask = render_beam(beam, scene).second;
  const int cols = int((scene.canvas_width - 1) / spacing) + 1;
  const int rows = int((scene.canvas_height - 1) / spacing) + 1;
  truth.field = DisplacementField::make(cols, rows, spacing);
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      const double x = col * spacing, y = row * spacing;
      if (!truth.mask.at_clamped(int(std::lround(x)), int(std::lround(y)))) continue;
      const std::size_t i = truth.field.index(col, row);
      truth.field.v[i] = column_deflection_px(x, beam, scene, layout);
      truth.field.valid[i] = 1;
    }
  }
  return truth;
}

// Inverse-mapped deformation of an arbitrary image by a sampled field:
// output(q) = input(q - d(q)). The field is extended to a band around the
// mask (column-clamped values), so material that moves past the original
// mask edge stays attached; far background is untouched.
inline GrayImage warp_by_field(const GrayImage& img, const GroundTruth& truth) {
  const DisplacementField& f = truth.field;
  const BinaryMask& mask = truth.mask;
  if (mask.width != img.width || mask.height != img.height)
    throw Error("warp_by_field: mask/image dimensions differ");

  double max_mag = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.valid[i]) max_mag = std::max({max_mag, std::abs(f.u[i]), std::abs(f.v[i])});
  const int band = int(std::ceil(max_mag)) + 1;

  // Per-column valid pixel range of the mask.
  std::vector<int> top(img.width, -1), bottom(img.width, -1);
  for (int x = 0; x < img.width; ++x)
    for (int y = 0; y < img.height; ++y)
      if (mask.at(x, y)) {
        if (top[x] < 0) top[x] = y;
        bottom[x] = y;
      }

  // Field value at a pixel: renormalized bilinear blend of the valid
  // samples around it.
  auto field_at = [&](double x, double y) -> std::pair<double, double> {
    const double gx = x / f.spacing, gy = y / f.spacing;
    const int c0 = std::clamp(int(std::floor(gx)), 0, f.cols - 1);
    const int r0 = std::clamp(int(std::floor(gy)), 0, f.rows - 1);
    const int c1 = std::min(c0 + 1, f.cols - 1);
    const int r1 = std::min(r0 + 1, f.rows - 1);
    const double tx = std::clamp(gx - c0, 0.0, 1.0), ty = std::clamp(gy - r0, 0.0, 1.0);
    const int cs[4] = {c0, c1, c0, c1};
    const int rs[4] = {r0, r0, r1, r1};
    const double ws[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
    double wu = 0, wv = 0, wsum = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = f.index(cs[k], rs[k]);
      if (!f.valid[i]) continue;
      wu += ws[k] * f.u[i];
      wv += ws[k] * f.v[i];
      wsum += ws[k];
    }
    if (wsum <= 0.0) return {0.0, 0.0};
    return {wu / wsum, wv / wsum};
  };

  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double du = 0.0, dv = 0.0;
      if (top[x] >= 0 && y >= top[x] - band && y <= bottom[x] + band) {
        const int yy = std::clamp(y, top[x], bottom[x]);
        const auto [u, v] = field_at(x, yy);
        du = u;
        dv = v;
      }
      const auto s = bilinear_sample(img, {x - du, y - dv});
      out.at(x, y) = s ? *s : 0.0;
    }
  }
  return out;
}

struct SliceLayout {
  int view_width = 0;
  int overlap_px = 0;
  std::vector<int> starts;
};

inline SliceLayout slice_layout(int panorama_width, int n, double overlap) {
  if (n < 1) throw Error("slice_views: need at least one view");
  if (overlap <= 0.1 || overlap >= 0.9) throw Error("slice_views: overlap must be in (0.1, 0.9)");
  SliceLayout s;
  const double denom = n - (n - 1) * overlap;
  s.view_width = std::min(panorama_width, int(std::ceil(panorama_width / denom)));
  s.overlap_px = int(std::lround(overlap * s.view_width));
  const int stride = s.view_width - s.overlap_px;
  if (n > 1 && stride < 1) throw Error("slice_views: slicing geometrically impossible");
  for (int i = 0; i < n; ++i) {
    int x = i * stride;
    if (x + s.view_width > panorama_width) x = panorama_width - s.view_width;
    s.starts.push_back(x);
  }
  return s;
}

// n horizontal crops with the given pairwise overlap, each optionally
// warped by a per-view distortion (view pixel q samples the panorama at
// crop_offset + D^-1 q, so distorted views keep full coverage).
inline std::vector<RgbImage> slice_views_rgb(const RgbImage& panorama, int n, double overlap,
                                             const std::vector<Homography>& distortions = {}) {
  if (!distortions.empty() && int(distortions.size()) != n)
    throw Error("slice_views: distortion count must match view count");
  const SliceLayout layout = slice_layout(panorama.width, n, overlap);
  GrayImage chan[3] = {GrayImage(panorama.width, panorama.height),
                       GrayImage(panorama.width, panorama.height),
                       GrayImage(panorama.width, panorama.height)};
  for (std::size_t i = 0; i < panorama.data.size(); ++i) {
    chan[0].data[i] = panorama.data[i].r;
    chan[1].data[i] = panorama.data[i].g;
    chan[2].data[i] = panorama.data[i].b;
  }
  std::vector<RgbImage> views;
  for (int i = 0; i < n; ++i) {
    RgbImage view(layout.view_width, panorama.height);
    const bool warp = !distortions.empty();
    const Homography inv = warp ? distortions[i].inverse() : Homography::identity();
    for (int y = 0; y < view.height; ++y) {
      for (int x = 0; x < view.width; ++x) {
        PixelCoord p{double(x), double(y)};
        if (warp) {
          const auto q = inv.try_apply(p);
          if (!q) continue;
          p = *q;
        }
        const PixelCoord src{p.x + layout.starts[i], p.y};
        const auto r = bilinear_sample(chan[0], src);
        if (!r) continue;
        view.at(x, y) = {*r, *bilinear_sample(chan[1], src), *bilinear_sample(chan[2], src)};
      }
    }
    views.push_back(std::move(view));
  }
  return views;
}

inline std::vector<GrayImage> slice_views(const GrayImage& panorama, int n, double overlap,
                                          const std::vector<Homography>& distortions = {}) {
  RgbImage rgb(panorama.width, panorama.height);
  for (std::size_t i = 0; i < panorama.data.size(); ++i)
    rgb.data[i] = {panorama.data[i], panorama.data[i], panorama.data[i]};
  std::vector<GrayImage> out;
  for (const RgbImage& v : slice_views_rgb(rgb, n, overlap, distortions)) {
    GrayImage g(v.width, v.height);
    for (std::size_t i = 0; i < v.data.size(); ++i) g.data[i] = v.data[i].r;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace dfield

#pragma once

// Scale-invariant local features: difference-of-Gaussians extrema over a
// Gaussian scale-space pyramid with contrast and edge-ratio rejection,
// dominant-gradient orientation assignment, and a 4x4x8 trilinearly
// weighted gradient-histogram descriptor (normalize, clip at 0.2,
// renormalize). Gradients make the descriptor invariant to additive
// brightness shifts; the normalization removes gain.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "dfield/core.hpp"

namespace dfield {

struct DetectorParams {
  int octaves = 0;                 // 0 = derived from image size, at least 3
  int scales_per_octave = 3;
  double sigma = 1.6;              // base blur of each octave
  double assumed_blur = 0.5;       // blur already present in the input
  double contrast_threshold = 0.03;
  double edge_ratio = 10.0;
  double ratio_of_max_orientation = 0.8;  // secondary orientation peaks
};

struct Keypoint {
  PixelCoord position;     // input-image coordinates
  double scale = 1.0;      // px
  double orientation = 0;  // radians in [0, 2pi)
  double response = 0.0;   // refined extremum contrast
};

struct Descriptor {
  std::array<double, 128> values{};

  double distance2(const Descriptor& o) const {
    double s = 0.0;
    for (int i = 0; i < 128; ++i) {
      const double d = values[i] - o.values[i];
      s += d * d;
    }
    return s;
  }
  double distance(const Descriptor& o) const { return std::sqrt(distance2(o)); }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

namespace detail {

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, img.width - 1);
        acc += kernel[i + radius] * img.at(xx, y);
      }
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, img.height - 1);
        acc += kernel[i + radius] * tmp.at(x, yy);
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

inline GrayImage decimate2(const GrayImage& img) {
  GrayImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

struct ScaleSpace {
  // gauss[o][i]: i = 0 .. s+2, sigma_i = sigma0 * 2^(i/s)
  std::vector<std::vector<GrayImage>> gauss;
  std::vector<std::vector<GrayImage>> dog;  // dog[o][i] = gauss[o][i+1] - gauss[o][i]
};

inline ScaleSpace build_scale_space(const GrayImage& img, const DetectorParams& p, int octaves) {
  ScaleSpace ss;
  const int s = p.scales_per_octave;
  std::vector<double> sigmas(s + 3);
  for (int i = 0; i < s + 3; ++i) sigmas[i] = p.sigma * std::pow(2.0, double(i) / s);

  GrayImage base = gaussian_blur(
      img, std::sqrt(std::max(0.01, p.sigma * p.sigma - p.assumed_blur * p.assumed_blur)));
  for (int o = 0; o < octaves; ++o) {
    std::vector<GrayImage> levels;
    levels.reserve(s + 3);
    levels.push_back(std::move(base));
    for (int i = 1; i < s + 3; ++i) {
      const double step = std::sqrt(sigmas[i] * sigmas[i] - sigmas[i - 1] * sigmas[i - 1]);
      levels.push_back(gaussian_blur(levels.back(), step));
    }
    std::vector<GrayImage> dogs;
    dogs.reserve(s + 2);
    for (int i = 0; i + 1 < int(levels.size()); ++i) {
      GrayImage d(levels[i].width, levels[i].height);
      for (std::size_t k = 0; k < d.data.size(); ++k)
        d.data[k] = levels[i + 1].data[k] - levels[i].data[k];
      dogs.push_back(std::move(d));
    }
    if (o + 1 < octaves) base = decimate2(levels[s]);  // sigma doubled
    ss.gauss.push_back(std::move(levels));
    ss.dog.push_back(std::move(dogs));
  }
  return ss;
}

struct RefinedExtremum {
  double x, y, level;
  double value;
  bool ok = false;
};

inline RefinedExtremum refine_extremum(const std::vector<GrayImage>& dog, int level, int x, int y,
                                       const DetectorParams& p) {
  RefinedExtremum r;
  double ox = 0, oy = 0, os = 0;
  for (int step = 0; step < 5; ++step) {
    const GrayImage& d0 = dog[level - 1];
    const GrayImage& d1 = dog[level];
    const GrayImage& d2 = dog[level + 1];
    const double dx = 0.5 * (d1.at(x + 1, y) - d1.at(x - 1, y));
    const double dy = 0.5 * (d1.at(x, y + 1) - d1.at(x, y - 1));
    const double ds = 0.5 * (d2.at(x, y) - d0.at(x, y));
    const double dxx = d1.at(x + 1, y) - 2 * d1.at(x, y) + d1.at(x - 1, y);
    const double dyy = d1.at(x, y + 1) - 2 * d1.at(x, y) + d1.at(x, y - 1);
    const double dss = d2.at(x, y) - 2 * d1.at(x, y) + d0.at(x, y);
    const double dxy =
        0.25 * (d1.at(x + 1, y + 1) - d1.at(x - 1, y + 1) - d1.at(x + 1, y - 1) + d1.at(x - 1, y - 1));
    const double dxs = 0.25 * (d2.at(x + 1, y) - d2.at(x - 1, y) - d0.at(x + 1, y) + d0.at(x - 1, y));
    const double dys = 0.25 * (d2.at(x, y + 1) - d2.at(x, y - 1) - d0.at(x, y + 1) + d0.at(x, y - 1));

    // Solve H * offset = -g for the 3x3 Hessian (Cramer).
    const double a = dxx, b = dxy, c = dxs, e = dyy, f = dys, g = dss;
    const double det = a * (e * g - f * f) - b * (b * g - f * c) + c * (b * f - e * c);
    if (std::abs(det) < 1e-20) return r;
    const double i00 = (e * g - f * f) / det;
    const double i01 = (c * f - b * g) / det;
    const double i02 = (b * f - c * e) / det;
    const double i11 = (a * g - c * c) / det;
    const double i12 = (b * c - a * f) / det;
    const double i22 = (a * e - b * b) / det;
    ox = -(i00 * dx + i01 * dy + i02 * ds);
    oy = -(i01 * dx + i11 * dy + i12 * ds);
    os = -(i02 * dx + i12 * dy + i22 * ds);
    if (std::abs(ox) < 0.5 && std::abs(oy) < 0.5 && std::abs(os) < 0.5) {
      const double refined = d1.at(x, y) + 0.5 * (dx * ox + dy * oy + ds * os);
      if (std::abs(refined) < p.contrast_threshold) return r;
      // edge rejection on the 2x2 spatial Hessian
      const double tr = dxx + dyy;
      const double det2 = dxx * dyy - dxy * dxy;
      const double er = p.edge_ratio;
      if (det2 <= 0.0 || tr * tr * er >= (er + 1) * (er + 1) * det2) return r;
      r.x = x + ox;
      r.y = y + oy;
      r.level = level + os;
      r.value = refined;
      r.ok = true;
      return r;
    }
    x += int(std::lround(std::clamp(ox, -1.0, 1.0)));
    y += int(std::lround(std::clamp(oy, -1.0, 1.0)));
    level += int(std::lround(std::clamp(os, -1.0, 1.0)));
    if (level < 1 || level > int(dog.size()) - 2 || x < 1 || x > d1.width - 2 || y < 1 ||
        y > d1.height - 2)
      return r;
  }
  return r;
}

inline std::vector<double> orientation_histogram(const GrayImage& img, double cx, double cy,
                                                 double sigma, int bins) {
  std::vector<double> hist(bins, 0.0);
  const int radius = std::max(1, int(std::lround(3.0 * sigma)));
  const int x0 = int(std::lround(cx)), y0 = int(std::lround(cy));
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      const int x = x0 + i, y = y0 + j;
      if (x < 1 || x >= img.width - 1 || y < 1 || y >= img.height - 1) continue;
      const double gx = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
      const double gy = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
      const double mag = std::hypot(gx, gy);
      const double angle = std::atan2(gy, gx);  // [-pi, pi]
      const double w = std::exp(-0.5 * (i * i + j * j) / (sigma * sigma));
      int bin = int(std::lround(angle / (2.0 * M_PI) * bins));
      bin = ((bin % bins) + bins) % bins;
      hist[bin] += w * mag;
    }
  }
  // circular smoothing
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> sm(bins);
    for (int i = 0; i < bins; ++i) {
      const double hm2 = hist[(i - 2 + bins) % bins], hm1 = hist[(i - 1 + bins) % bins];
      const double hp1 = hist[(i + 1) % bins], hp2 = hist[(i + 2) % bins];
      sm[i] = (hm2 + hp2) / 16.0 + 4.0 * (hm1 + hp1) / 16.0 + 6.0 * hist[i] / 16.0;
    }
    hist = std::move(sm);
  }
  return hist;
}

inline Descriptor compute_descriptor(const GrayImage& img, double cx, double cy,
                                     double scale_local, double theta) {
  constexpr int D = 4;  // spatial bins per side
  constexpr int B = 8;  // orientation bins
  const double hist_width = 3.0 * scale_local;
  const int radius = std::min(
      int(std::lround(hist_width * std::sqrt(2.0) * (D + 1) * 0.5)),
      int(std::hypot(img.width, img.height)));
  const double ct = std::cos(theta), st = std::sin(theta);
  const int x0 = int(std::lround(cx)), y0 = int(std::lround(cy));

  double hist[D + 2][D + 2][B] = {};
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      const double xr = (ct * i + st * j) / hist_width;
      const double yr = (-st * i + ct * j) / hist_width;
      const double rbin = yr + D / 2.0 - 0.5;
      const double cbin = xr + D / 2.0 - 0.5;
      if (rbin <= -1.0 || rbin >= D || cbin <= -1.0 || cbin >= D) continue;
      const int x = x0 + i, y = y0 + j;
      if (x < 1 || x >= img.width - 1 || y < 1 || y >= img.height - 1) continue;
      const double gx = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
      const double gy = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
      const double mag = std::hypot(gx, gy);
      double ori = std::atan2(gy, gx) - theta;
      while (ori < 0.0) ori += 2.0 * M_PI;
      while (ori >= 2.0 * M_PI) ori -= 2.0 * M_PI;
      const double obin = ori / (2.0 * M_PI) * B;
      const double w = std::exp(-(xr * xr + yr * yr) / (0.5 * D * D)) * mag;

      const int r0 = int(std::floor(rbin)), c0 = int(std::floor(cbin)), o0 = int(std::floor(obin));
      const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
      for (int dr = 0; dr <= 1; ++dr) {
        const int rr = r0 + dr + 1;
        if (rr < 0 || rr >= D + 2) continue;
        const double wr = w * (dr ? fr : 1.0 - fr);
        for (int dc = 0; dc <= 1; ++dc) {
          const int cc = c0 + dc + 1;
          if (cc < 0 || cc >= D + 2) continue;
          const double wc = wr * (dc ? fc : 1.0 - fc);
          for (int dodir = 0; dodir <= 1; ++dodir) {
            const int oo = (o0 + dodir) % B;
            hist[rr][cc][oo] += wc * (dodir ? fo : 1.0 - fo);
          }
        }
      }
    }
  }

  Descriptor desc;
  int k = 0;
  for (int r = 1; r <= D; ++r)
    for (int c = 1; c <= D; ++c)
      for (int o = 0; o < B; ++o) desc.values[k++] = hist[r][c][o];
  auto normalize = [&] {
    double n = desc.norm();
    if (n < 1e-12) n = 1e-12;
    for (double& v : desc.values) v /= n;
  };
  normalize();
  for (double& v : desc.values) v = std::min(v, 0.2);
  normalize();
  return desc;
}

}  // namespace detail

// Detects scale-space features and their descriptors. A uniform image has
// no extrema and yields an empty result; images smaller than 32x32 are
// rejected.
inline std::vector<std::pair<Keypoint, Descriptor>> detect_features(
    const GrayImage& img, const DetectorParams& params = {}) {
  if (img.width < 32 || img.height < 32)
    throw Error("detect_features: image must be at least 32x32");
  const int s = params.scales_per_octave;
  const int max_octaves = int(std::floor(std::log2(std::min(img.width, img.height) / 8.0))) + 1;
  int octaves = params.octaves > 0 ? params.octaves
                                   : std::max(3, int(std::floor(std::log2(
                                                    std::min(img.width, img.height)))) - 4);
  octaves = std::clamp(octaves, 1, max_octaves);

  const detail::ScaleSpace ss = detail::build_scale_space(img, params, octaves);
  std::vector<std::pair<Keypoint, Descriptor>> out;
  const double prefilter = 0.5 * params.contrast_threshold;

  for (int o = 0; o < octaves; ++o) {
    const auto& dogs = ss.dog[o];
    const double octave_scale = std::pow(2.0, o);
    for (int level = 1; level <= s; ++level) {
      const GrayImage& d = dogs[level];
      if (d.width < 3 || d.height < 3) continue;
      for (int y = 1; y < d.height - 1; ++y) {
        for (int x = 1; x < d.width - 1; ++x) {
          const double v = d.at(x, y);
          if (std::abs(v) < prefilter) continue;
          bool is_max = true, is_min = true;
          for (int dl = -1; dl <= 1 && (is_max || is_min); ++dl) {
            const GrayImage& dd = dogs[level + dl];
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dx == 0 && dy == 0) continue;
                const double w = dd.at(x + dx, y + dy);
                if (w >= v) is_max = false;
                if (w <= v) is_min = false;
              }
          }
          if (!is_max && !is_min) continue;
          const auto r = detail::refine_extremum(dogs, level, x, y, params);
          if (!r.ok) continue;

          const double scale_local = params.sigma * std::pow(2.0, r.level / s);
          const int grad_level = std::clamp(int(std::lround(r.level)), 0, s + 2);
          const GrayImage& gimg = ss.gauss[o][grad_level];

          const auto hist =
              detail::orientation_histogram(gimg, r.x, r.y, 1.5 * scale_local, 36);
          const double hmax = *std::max_element(hist.begin(), hist.end());
          if (hmax <= 0.0) continue;
          for (int bin = 0; bin < 36; ++bin) {
            const double h0 = hist[bin];
            const double hl = hist[(bin + 35) % 36], hr = hist[(bin + 1) % 36];
            if (h0 < params.ratio_of_max_orientation * hmax || h0 <= hl || h0 <= hr) continue;
            const double denom = hl - 2 * h0 + hr;
            const double delta = std::abs(denom) < 1e-12 ? 0.0 : 0.5 * (hl - hr) / denom;
            double theta = (bin + delta) * 2.0 * M_PI / 36.0;
            if (theta >= M_PI) theta -= 2.0 * M_PI;  // atan2 convention
            Keypoint kp;
            kp.position = {r.x * octave_scale, r.y * octave_scale};
            kp.scale = scale_local * octave_scale;
            kp.orientation = theta < 0 ? theta + 2.0 * M_PI : theta;
            kp.response = std::abs(r.value);
            out.emplace_back(kp, detail::compute_descriptor(gimg, r.x, r.y, scale_local, theta));
          }
        }
      }
    }
  }
  return out;
}

inline std::string keypoints_csv(const std::vector<std::pair<Keypoint, Descriptor>>& feats) {
  std::string csv = "x,y,scale,orientation\n";
  char line[128];
  for (const auto& [kp, desc] : feats) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f,%.6f\n", kp.position.x, kp.position.y,
                  kp.scale, kp.orientation);
    csv += line;
  }
  return csv;
}

}  // namespace dfield

#pragma once

// Iterative foreground extraction from a user rectangle: pixels outside the
// rectangle are hard background, pixels inside start as probable foreground.
// Each iteration re-assigns GMM components, refits both color models,
// rebuilds the pixel graph and solves a min-cut. The tracked energy
//   E = sum_n min_k [-log w_k - log N_k(z_n)] + sum_{(m,n)} V(m,n) [a_m != a_n]
// is non-increasing across iterations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/gmm.hpp"
#include "dfield/maxflow.hpp"

namespace dfield {

enum class TrimapLabel : std::uint8_t {
  Background = 0,      // sure background (outside the rectangle), never flips
  ProbBackground = 1,
  ProbForeground = 2,
  Foreground = 3,      // sure foreground (optional seeds)
};

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int px, int py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
};

struct GrabcutParams {
  int iterations = 5;
  int components = 5;     // per color model
  double gamma = 50.0;
  std::uint64_t seed = 1;
  int kmeans_iters = 10;
  // Keep only the largest connected foreground region as a documented
  // post-step; the raw cut can leave small speckles.
  bool keep_largest_component = true;
};

struct GrabcutResult {
  BinaryMask mask;
  std::vector<double> energies;  // tracked energy after each iteration's cut
  std::vector<TrimapLabel> trimap;
};

inline GrayImage apply_mask(const GrayImage& img, const BinaryMask& mask) {
  if (img.width != mask.width || img.height != mask.height)
    throw Error("apply_mask: dimension mismatch");
  GrayImage out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (!mask.data[i]) out.data[i] = 0.0;
  return out;
}

namespace detail {

struct PairwiseWeights {
  // weight to the left / up / up-left / up-right neighbor of each pixel
  std::vector<double> left, up, upleft, upright;
};

inline PairwiseWeights pairwise_weights(const RgbImage& img, double gamma) {
  const int w = img.width, h = img.height;
  auto vec = [&](int x, int y) {
    const Rgb& c = img.at(x, y);
    return Eigen::Vector3d(c.r, c.g, c.b);
  };
  double sum_d2 = 0.0;
  std::size_t n_pairs = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d z = vec(x, y);
      if (x > 0) {
        sum_d2 += (z - vec(x - 1, y)).squaredNorm();
        ++n_pairs;
      }
      if (y > 0) {
        sum_d2 += (z - vec(x, y - 1)).squaredNorm();
        ++n_pairs;
      }
      if (x > 0 && y > 0) {
        sum_d2 += (z - vec(x - 1, y - 1)).squaredNorm();
        ++n_pairs;
      }
      if (x + 1 < w && y > 0) {
        sum_d2 += (z - vec(x + 1, y - 1)).squaredNorm();
        ++n_pairs;
      }
    }
  }
  const double mean = n_pairs ? sum_d2 / double(n_pairs) : 0.0;
  const double beta = mean > 1e-12 ? 1.0 / (2.0 * mean) : 0.0;
  const double diag = gamma / std::sqrt(2.0);

  PairwiseWeights pw;
  const std::size_t n = std::size_t(w) * h;
  pw.left.assign(n, 0.0);
  pw.up.assign(n, 0.0);
  pw.upleft.assign(n, 0.0);
  pw.upright.assign(n, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      const Eigen::Vector3d z = vec(x, y);
      if (x > 0) pw.left[i] = gamma * std::exp(-beta * (z - vec(x - 1, y)).squaredNorm());
      if (y > 0) pw.up[i] = gamma * std::exp(-beta * (z - vec(x, y - 1)).squaredNorm());
      if (x > 0 && y > 0)
        pw.upleft[i] = diag * std::exp(-beta * (z - vec(x - 1, y - 1)).squaredNorm());
      if (x + 1 < w && y > 0)
        pw.upright[i] = diag * std::exp(-beta * (z - vec(x + 1, y - 1)).squaredNorm());
    }
  }
  return pw;
}

inline bool is_foreground(TrimapLabel l) {
  return l == TrimapLabel::Foreground || l == TrimapLabel::ProbForeground;
}

}  // namespace detail

inline GrabcutResult grabcut(const RgbImage& img, const Rect& rect, const GrabcutParams& params = {}) {
  const int w = img.width, h = img.height;
  if (rect.w < 1 || rect.h < 1 || rect.x < 0 || rect.y < 0 || rect.x + rect.w > w ||
      rect.y + rect.h > h)
    throw Error("grabcut: rectangle degenerate or outside the image");
  const std::size_t n = std::size_t(w) * h;

  std::vector<Eigen::Vector3d> colors(n);
  for (std::size_t i = 0; i < n; ++i)
    colors[i] = {img.data[i].r, img.data[i].g, img.data[i].b};

  std::vector<TrimapLabel> trimap(n, TrimapLabel::Background);
  for (int y = rect.y; y < rect.y + rect.h; ++y)
    for (int x = rect.x; x < rect.x + rect.w; ++x)
      trimap[std::size_t(y) * w + x] = TrimapLabel::ProbForeground;

  auto collect = [&](bool foreground) {
    std::vector<Eigen::Vector3d> side;
    for (std::size_t i = 0; i < n; ++i)
      if (detail::is_foreground(trimap[i]) == foreground) side.push_back(colors[i]);
    return side;
  };

  GrabcutResult result;
  const std::vector<Eigen::Vector3d> bg0 = collect(false);
  if (bg0.empty()) {
    // Rectangle covers the whole image: nothing is constrained to be
    // background, so the foreground hypothesis stands as-is.
    result.trimap = std::move(trimap);
    result.mask = BinaryMask(w, h, true);
    return result;
  }

  GmmModel fg_model = fit_gmm(collect(true), params.components,
                              derive_seed(params.seed, 0xF06), params.kmeans_iters);
  GmmModel bg_model =
      fit_gmm(bg0, params.components, derive_seed(params.seed, 0xBA6), params.kmeans_iters);

  const detail::PairwiseWeights pw = detail::pairwise_weights(img, params.gamma);
  constexpr double kHard = 1e12;

  for (int iter = 0; iter < params.iterations; ++iter) {
    // Re-assign components and refit both models from the current labels.
    std::vector<int> fg_assign, bg_assign;
    std::vector<Eigen::Vector3d> fg_px, bg_px;
    for (std::size_t i = 0; i < n; ++i) {
      if (detail::is_foreground(trimap[i])) {
        fg_px.push_back(colors[i]);
        fg_assign.push_back(fg_model.best_component(colors[i]));
      } else {
        bg_px.push_back(colors[i]);
        bg_assign.push_back(bg_model.best_component(colors[i]));
      }
    }
    if (fg_px.empty()) throw Error("grabcut: empty foreground (bad rectangle?)");
    fg_model = detail::components_from_assignment(fg_px, fg_assign, int(fg_model.components.size()));
    bg_model = detail::components_from_assignment(bg_px, bg_assign, int(bg_model.components.size()));

    FlowNetwork net{int(n)};
    for (std::size_t i = 0; i < n; ++i) {
      switch (trimap[i]) {
        case TrimapLabel::Background:
          net.add_terminal(int(i), 0.0, kHard);
          break;
        case TrimapLabel::Foreground:
          net.add_terminal(int(i), kHard, 0.0);
          break;
        default: {
          // label BG pays the background data term (source-side = FG).
          // Tight color clusters give negative log-costs; shifting both
          // terminals per pixel keeps capacities non-negative without
          // changing the cut.
          double db = bg_model.min_neg_log(colors[i]);
          double df = fg_model.min_neg_log(colors[i]);
          const double base = std::min({db, df, 0.0});
          net.add_terminal(int(i), db - base, df - base);
        }
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (x > 0 && pw.left[i] > 0) net.add_edge(i, i - 1, pw.left[i], pw.left[i]);
        if (y > 0 && pw.up[i] > 0) net.add_edge(i, i - w, pw.up[i], pw.up[i]);
        if (x > 0 && y > 0 && pw.upleft[i] > 0)
          net.add_edge(i, i - w - 1, pw.upleft[i], pw.upleft[i]);
        if (x + 1 < w && y > 0 && pw.upright[i] > 0)
          net.add_edge(i, i - w + 1, pw.upright[i], pw.upright[i]);
      }
    }
    const FlowNetwork::Result cut = net.max_flow();
    for (std::size_t i = 0; i < n; ++i) {
      if (trimap[i] == TrimapLabel::Background || trimap[i] == TrimapLabel::Foreground) continue;
      trimap[i] = cut.source_side[i] ? TrimapLabel::ProbForeground : TrimapLabel::ProbBackground;
    }

    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      energy += detail::is_foreground(trimap[i]) ? fg_model.min_neg_log(colors[i])
                                                 : bg_model.min_neg_log(colors[i]);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        const bool f = detail::is_foreground(trimap[i]);
        if (x > 0 && f != detail::is_foreground(trimap[i - 1])) energy += pw.left[i];
        if (y > 0 && f != detail::is_foreground(trimap[i - w])) energy += pw.up[i];
        if (x > 0 && y > 0 && f != detail::is_foreground(trimap[i - w - 1])) energy += pw.upleft[i];
        if (x + 1 < w && y > 0 && f != detail::is_foreground(trimap[i - w + 1]))
          energy += pw.upright[i];
      }
    }
    result.energies.push_back(energy);

    bool any_fg = false;
    for (std::size_t i = 0; i < n && !any_fg; ++i) any_fg = detail::is_foreground(trimap[i]);
    if (!any_fg) throw Error("grabcut: empty foreground (bad rectangle?)");
  }

  BinaryMask mask(w, h);
  for (std::size_t i = 0; i < n; ++i) mask.data[i] = detail::is_foreground(trimap[i]) ? 1 : 0;
  if (params.keep_largest_component) mask = largest_component(mask, 8);
  result.mask = std::move(mask);
  result.trimap = std::move(trimap);
  return result;
}

}  // namespace dfield

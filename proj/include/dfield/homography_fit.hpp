#pragma once

// Homography estimation: the exact 4-point solution, the Hartley-normalized
// direct linear transform for n >= 4 correspondences, and a seeded RANSAC
// wrapper that filters mismatches before a least-squares refit.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "dfield/features.hpp"
#include "dfield/homography.hpp"
#include "dfield/matching.hpp"
#include "dfield/rng.hpp"

namespace dfield {

using PointPair = std::pair<PixelCoord, PixelCoord>;  // (source, target)

// Exact solution of the 8x8 linear system through four correspondences.
inline Homography homography_from_4(const std::array<PointPair, 4>& pairs) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const auto& [s, t] = pairs[i];
    a.row(2 * i) << s.x, s.y, 1, 0, 0, 0, -s.x * t.x, -s.y * t.x;
    a.row(2 * i + 1) << 0, 0, 0, s.x, s.y, 1, -s.x * t.y, -s.y * t.y;
    b(2 * i) = t.x;
    b(2 * i + 1) = t.y;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) throw Error("homography_from_4: degenerate point configuration");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return Homography(m);
}

namespace detail {

struct Normalization {
  Eigen::Matrix3d t;       // similarity: translate centroid to 0, mean norm sqrt(2)
  Eigen::Matrix3d t_inv;
};

inline Normalization normalize_points(const std::vector<PixelCoord>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= double(pts.size());
  cy /= double(pts.size());
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= double(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Normalization n;
  n.t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  n.t_inv << 1 / s, 0, cx, 0, 1 / s, cy, 0, 0, 1;
  return n;
}

}  // namespace detail

// Least-squares homography via the null vector of the 2n x 9 design matrix
// built from Hartley-normalized coordinates.
inline Homography dlt_homography(const std::vector<PointPair>& pairs) {
  const int n = int(pairs.size());
  if (n < 4) throw Error("dlt_homography: at least 4 correspondences required");
  std::vector<PixelCoord> src(n), dst(n);
  for (int i = 0; i < n; ++i) {
    src[i] = pairs[i].first;
    dst[i] = pairs[i].second;
  }
  const auto ns = detail::normalize_points(src);
  const auto nd = detail::normalize_points(dst);
  auto map = [](const Eigen::Matrix3d& t, PixelCoord p) {
    return PixelCoord{t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2),
                      t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
  };
  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const PixelCoord s = map(ns.t, src[i]);
    const PixelCoord t = map(nd.t, dst[i]);
    a.row(2 * i) << s.x, s.y, 1, 0, 0, 0, -s.x * t.x, -s.y * t.x, -t.x;
    a.row(2 * i + 1) << 0, 0, 0, s.x, s.y, 1, -s.x * t.y, -s.y * t.y, -t.y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(7) / sv(0) < 1e-10)
    throw Error("dlt_homography: degenerate configuration (rank-deficient design matrix)");
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography((nd.t_inv * hn * ns.t).eval());
}

inline double reprojection_error(const Homography& h, const PointPair& pair) {
  const auto q = h.try_apply(pair.first);
  if (!q) return std::numeric_limits<double>::max();
  return std::hypot(q->x - pair.second.x, q->y - pair.second.y);
}

struct RansacResult {
  Homography homography;          // maps keypoints_b coordinates into a's frame
  std::vector<int> inliers;       // indices into the match list, ascending
};

// Random-sample-consensus estimation over the match set. The model maps
// b's keypoints to a's. Fixed iteration count and seeded sampling make the
// result bit-deterministic; consensus ties break by lower total inlier
// reprojection error, then by earlier iteration. The best consensus set is
// re-fit with the DLT.
inline RansacResult ransac_homography(const std::vector<Match>& matches,
                                      const std::vector<Keypoint>& keypoints_a,
                                      const std::vector<Keypoint>& keypoints_b,
                                      double threshold_px = 3.0, int max_iters = 2000,
                                      std::uint64_t seed = 1) {
  const int n = int(matches.size());
  if (n < 4) throw Error("ransac_homography: fewer than 4 matches");
  std::vector<PointPair> pairs(n);
  for (int i = 0; i < n; ++i)
    pairs[i] = {keypoints_b[matches[i].index_b].position,
                keypoints_a[matches[i].index_a].position};

  Rng rng(seed);
  bool have_best = false;
  Homography best_h;
  int best_count = 0;
  double best_err = 0.0;

  std::array<int, 4> pick{};
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int k = 0; k < 4; ++k) {
      for (;;) {
        const int c = int(rng.index(std::size_t(n)));
        bool dup = false;
        for (int j = 0; j < k; ++j) dup = dup || pick[j] == c;
        if (!dup) {
          pick[k] = c;
          break;
        }
      }
    }
    Homography h;
    try {
      h = homography_from_4({pairs[pick[0]], pairs[pick[1]], pairs[pick[2]], pairs[pick[3]]});
    } catch (const Error&) {
      continue;  // collinear / degenerate sample
    }
    int count = 0;
    double err_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = reprojection_error(h, pairs[i]);
      if (e < threshold_px) {
        ++count;
        err_sum += e;
      }
    }
    if (count > best_count || (count == best_count && count > 0 && err_sum < best_err)) {
      best_count = count;
      best_err = err_sum;
      best_h = h;
      have_best = true;
    }
  }
  if (!have_best || best_count < 4)
    throw Error("ransac_homography: no consensus (no model with >= 4 inliers)");

  auto inliers_of = [&](const Homography& h) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i)
      if (reprojection_error(h, pairs[i]) < threshold_px) ids.push_back(i);
    return ids;
  };
  std::vector<int> ids = inliers_of(best_h);
  std::vector<PointPair> support;
  support.reserve(ids.size());
  for (int i : ids) support.push_back(pairs[i]);
  RansacResult result;
  try {
    result.homography = dlt_homography(support);
  } catch (const Error&) {
    result.homography = best_h;  // refit degenerate: keep the sampled model
  }
  std::vector<int> refit_ids = inliers_of(result.homography);
  if (int(refit_ids.size()) < 4) {
    result.homography = best_h;
    refit_ids = std::move(ids);
  }
  result.inliers = std::move(refit_ids);
  return result;
}

}  // namespace dfield

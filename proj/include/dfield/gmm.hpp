#pragma once

// Gaussian mixture color models for foreground/background segmentation.
// Fitting follows the usual GrabCut recipe: seeded k-means++ clusters the
// samples, then each cluster becomes one Gaussian component; later
// iterations re-assign pixels to their best component and re-estimate.
// Covariances are regularized by adding eps*I so near-degenerate color
// clusters stay invertible.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/rng.hpp"

namespace dfield {

constexpr double kGmmCovarianceEps = 1e-4;

struct GmmComponent {
  double weight = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
  // cached for evaluation
  Eigen::Matrix3d cov_inv = Eigen::Matrix3d::Identity();
  double log_norm = 0.0;  // 0.5*log((2*pi)^3 * det(cov))
};

struct GmmModel {
  std::vector<GmmComponent> components;

  // Joint assignment cost -log(w_k) - log N_k(color) for the best component.
  double min_neg_log(const Eigen::Vector3d& color) const {
    double best = std::numeric_limits<double>::max();
    for (const GmmComponent& c : components) {
      if (c.weight <= 0.0) continue;
      const Eigen::Vector3d d = color - c.mean;
      const double cost = -std::log(c.weight) + c.log_norm + 0.5 * d.dot(c.cov_inv * d);
      best = std::min(best, cost);
    }
    return best;
  }

  int best_component(const Eigen::Vector3d& color) const {
    double best = std::numeric_limits<double>::max();
    int arg = 0;
    for (int k = 0; k < int(components.size()); ++k) {
      const GmmComponent& c = components[k];
      if (c.weight <= 0.0) continue;
      const Eigen::Vector3d d = color - c.mean;
      const double cost = -std::log(c.weight) + c.log_norm + 0.5 * d.dot(c.cov_inv * d);
      if (cost < best) {
        best = cost;
        arg = k;
      }
    }
    return arg;
  }
};

namespace detail {

inline void finalize_component(GmmComponent& c) {
  c.cov += kGmmCovarianceEps * Eigen::Matrix3d::Identity();
  const double det = c.cov.determinant();
  c.cov_inv = c.cov.inverse();
  c.log_norm = 0.5 * (3.0 * std::log(2.0 * M_PI) + std::log(det));
}

// Components re-estimated from an explicit per-sample assignment.
inline GmmModel components_from_assignment(const std::vector<Eigen::Vector3d>& samples,
                                           const std::vector<int>& assign, int k) {
  GmmModel model;
  model.components.resize(k);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    GmmComponent& c = model.components[assign[i]];
    c.mean += samples[i];
    ++counts[assign[i]];
  }
  for (int j = 0; j < k; ++j)
    if (counts[j] > 0) model.components[j].mean /= double(counts[j]);
  std::vector<Eigen::Matrix3d> scatter(k, Eigen::Matrix3d::Zero());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::Vector3d d = samples[i] - model.components[assign[i]].mean;
    scatter[assign[i]] += d * d.transpose();
  }
  for (int j = 0; j < k; ++j) {
    GmmComponent& c = model.components[j];
    c.weight = double(counts[j]) / double(samples.size());
    c.cov = counts[j] > 0 ? (scatter[j] / double(counts[j])).eval() : Eigen::Matrix3d::Zero();
    finalize_component(c);
  }
  return model;
}

}  // namespace detail

// Seeded k-means++ initialization followed by Lloyd iterations and a
// per-cluster Gaussian fit. Requests for more components than samples
// silently reduce K to the sample count.
inline GmmModel fit_gmm(const std::vector<Eigen::Vector3d>& samples, int k, std::uint64_t seed,
                        int kmeans_iters = 10) {
  if (samples.empty()) throw Error("fit_gmm: no samples");
  if (k < 1) throw Error("fit_gmm: need at least one component");
  k = std::min<std::size_t>(k, samples.size());

  Rng rng(seed);
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(k);
  centers.push_back(samples[rng.index(samples.size())]);
  std::vector<double> d2(samples.size());
  while (int(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, (samples[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(samples[rng.index(samples.size())]);  // duplicate colors
      continue;
    }
    double target = rng.uniform() * total;
    std::size_t chosen = samples.size() - 1;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(samples[chosen]);
  }

  std::vector<int> assign(samples.size(), 0);
  for (int iter = 0; iter < kmeans_iters; ++iter) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      for (int j = 0; j < k; ++j) {
        const double d = (samples[i] - centers[j]).squaredNorm();
        if (d < best) {
          best = d;
          assign[i] = j;
        }
      }
    }
    std::vector<Eigen::Vector3d> sums(k, Eigen::Vector3d::Zero());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      sums[assign[i]] += samples[i];
      ++counts[assign[i]];
    }
    for (int j = 0; j < k; ++j)
      if (counts[j] > 0) centers[j] = sums[j] / double(counts[j]);
  }
  return detail::components_from_assignment(samples, assign, k);
}

}  // namespace dfield

#pragma once

// 3x3 projective transform between image planes, used for foreshortening
// correction, pairwise view registration and panorama composition.

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "dfield/core.hpp"

namespace dfield {

class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) : m_(normalized_form(m)) {
    if (!m_.allFinite()) throw Error("homography: non-finite entries");
    if (std::abs(m_.determinant()) < 1e-14)
      throw Error("homography: singular matrix");
  }

  static Homography identity() { return Homography(); }

  static Homography translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
  }

  const Eigen::Matrix3d& matrix() const { return m_; }

  Homography inverse() const { return Homography(m_.inverse().eval()); }

  // Maps p through the transform. Returns nullopt when p is sent to
  // infinity (homogeneous w collapses to zero).
  std::optional<PixelCoord> try_apply(PixelCoord p) const {
    const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
    if (std::abs(w) < 1e-14) return std::nullopt;
    return PixelCoord{(m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2)) / w,
                      (m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2)) / w};
  }

  PixelCoord apply(PixelCoord p) const {
    auto q = try_apply(p);
    if (!q) throw Error("homography: point maps to infinity");
    return *q;
  }

  // Composition: (a * b) applies b first, then a.
  friend Homography operator*(const Homography& a, const Homography& b) {
    return Homography((a.m_ * b.m_).eval());
  }

 private:
  // Scale so the bottom-right entry is 1 when nonzero, else to unit
  // Frobenius norm.
  static Eigen::Matrix3d normalized_form(Eigen::Matrix3d m) {
    if (std::abs(m(2, 2)) > 1e-12 * m.norm()) return m / m(2, 2);
    const double n = m.norm();
    if (n == 0.0) return m;
    return m / n;
  }

  Eigen::Matrix3d m_;
};

}  // namespace dfield

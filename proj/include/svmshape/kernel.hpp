#pragma once

#include <Eigen/Core>
#include <cmath>

#include "svmshape/error.hpp"
#include "svmshape/point_set.hpp"

namespace svmshape {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class KernelMode { isotropic, anisotropic };

constexpr double kSigmaFloor = 1e-4;

/// Gaussian kernel bandwidths. The isotropic form carries the conventional
/// 1/(2 sigma^2) factor; the anisotropic form uses 1/sigma_k^2 per axis, so
/// an anisotropic (s,s,s) equals an isotropic kernel with 2*sigma_iso^2 = s^2.
struct KernelParams {
  KernelMode mode = KernelMode::isotropic;
  Eigen::VectorXd sigma;

  static KernelParams isotropic(double s) {
    KernelParams k;
    k.mode = KernelMode::isotropic;
    k.sigma = Eigen::VectorXd::Constant(1, s);
    return k;
  }

  static KernelParams anisotropic(const Vec3& s) {
    KernelParams k;
    k.mode = KernelMode::anisotropic;
    k.sigma = s;
    return k;
  }

  void validate() const {
    const int want = mode == KernelMode::isotropic ? 1 : 3;
    if (sigma.size() != want) throw Error(ErrorCode::shape_mismatch, "sigma has wrong dimension for kernel mode");
    if (!sigma.allFinite() || (sigma.array() < kSigmaFloor).any())
      throw Error(ErrorCode::invalid_spec, "sigma must be finite and >= 1e-4");
  }
};

inline double kernel_eval(const Vec3& a, const Vec3& b, const KernelParams& k) {
  if (k.mode == KernelMode::isotropic) {
    const double s = k.sigma[0];
    return std::exp(-(a - b).squaredNorm() / (2.0 * s * s));
  }
  const Eigen::Array3d d = (a - b).array();
  const Eigen::Array3d s = k.sigma.array();
  return std::exp(-(d * d / (s * s)).sum());
}

/// d kernel / d a (the gradient w.r.t. the second argument is the negation).
inline Vec3 kernel_grad_a(const Vec3& a, const Vec3& b, const KernelParams& k, double kval) {
  if (k.mode == KernelMode::isotropic) {
    const double s = k.sigma[0];
    return -kval / (s * s) * (a - b);
  }
  const Eigen::Array3d s = k.sigma.array();
  return (-2.0 * kval * (a - b).array() / (s * s)).matrix();
}

/// d kernel / d sigma, same shape as sigma.
inline Eigen::VectorXd kernel_grad_sigma(const Vec3& a, const Vec3& b, const KernelParams& k, double kval) {
  if (k.mode == KernelMode::isotropic) {
    const double s = k.sigma[0];
    Eigen::VectorXd g(1);
    g[0] = kval * (a - b).squaredNorm() / (s * s * s);
    return g;
  }
  const Eigen::Array3d d = (a - b).array();
  const Eigen::Array3d s = k.sigma.array();
  return (2.0 * kval * d * d / (s * s * s)).matrix();
}

inline Eigen::MatrixXd gram_matrix(const PointMatrix& points, const KernelParams& k) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw Error(ErrorCode::shape_mismatch, "gram matrix needs at least 2 points");
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_eval(points.row(i), points.row(j), k);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

}  // namespace svmshape

#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "mrnr/errors.hpp"

namespace mrnr {

/// Normalized, symmetric 1D Gaussian over integer offsets [-radius, radius].
template <typename Scalar>
struct BasicGaussianKernel {
  Scalar sigma{};
  int radius = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;  // weights[radius + g] is the weight at offset g

  Scalar at(int offset) const { return weights[radius + offset]; }
  Eigen::Index size() const { return weights.size(); }

  /// Single-tap kernel; convolution with it is the identity.
  static BasicGaussianKernel identity() {
    BasicGaussianKernel k;
    k.sigma = Scalar(0);
    k.radius = 0;
    k.weights = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(1);
    return k;
  }
};

using GaussianKernel1D = BasicGaussianKernel<double>;

namespace detail {

/// exp(-g^2 / denominator) for g in [-2*ceil(sigma), 2*ceil(sigma)], divided by its sum.
template <typename Scalar>
BasicGaussianKernel<Scalar> sampled_gaussian(Scalar sigma, Scalar denominator) {
  using std::ceil;
  using std::exp;
  if (!(sigma > Scalar(0)) || !std::isfinite(double(sigma)))
    throw ArgumentError("gaussian kernel sigma must be positive and finite, got " + std::to_string(double(sigma)));
  BasicGaussianKernel<Scalar> k;
  k.sigma = sigma;
  k.radius = 2 * int(ceil(sigma));
  k.weights.resize(2 * k.radius + 1);
  for (int g = -k.radius; g <= k.radius; ++g) k.weights[k.radius + g] = exp(-Scalar(g * g) / denominator);
  k.weights /= k.weights.sum();
  return k;
}

}  // namespace detail

/// Design-smoothing kernel: weights proportional to exp(-g^2 / (2 sigma^2)).
template <typename Scalar = double>
BasicGaussianKernel<Scalar> gaussian_kernel(Scalar sigma) {
  return detail::sampled_gaussian<Scalar>(sigma, Scalar(2) * sigma * sigma);
}

/// 'Same'-length convolution with zero padding outside [0, n).
template <typename Derived, typename Scalar = typename Derived::Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> convolve_same(const Eigen::MatrixBase<Derived>& x,
                                                        const BasicGaussianKernel<Scalar>& kernel) {
  const Eigen::Index n = x.size();
  const int r = kernel.radius;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - r);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + r);
    Scalar acc(0);
    // y[i] = sum_g x[i - g] w[g]; the kernel is symmetric so w[g] == w[-g].
    for (Eigen::Index k = lo; k <= hi; ++k) acc += x[k] * kernel.weights[r + (i - k)];
    y[i] = acc;
  }
  return y;
}

}  // namespace mrnr

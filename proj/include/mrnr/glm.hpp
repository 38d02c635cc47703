#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/volume.hpp"

namespace mrnr {

/// Double-gamma shape parameters, in seconds.
struct HrfParams {
  double peak_delay = 6.0;
  double undershoot_delay = 16.0;
  double peak_dispersion = 1.0;
  double undershoot_dispersion = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
};

struct HrfKernel {
  Eigen::VectorXd samples;
  double tr_seconds = 1.0;
  Index peak_index = 0;
};

/// Double-gamma HRF sampled every `tr_seconds` over [0, length_seconds), scaled to a maximum of 1.
HrfKernel canonical_hrf(double tr_seconds, double length_seconds, const HrfParams& params = {});

/// Expected response per category, one column each, in schedule order.
struct DesignMatrix {
  Eigen::MatrixXd columns;  // t x p
  std::vector<std::string> names;

  Index t() const { return columns.rows(); }
  Index p() const { return columns.cols(); }
};

/// Boxcar of each category's events convolved causally with the HRF, truncated to `t` samples.
DesignMatrix build_design(const OnsetSchedule& schedule, const HrfKernel& hrf, Index t);

/// Temporal noise covariance used by the GLS estimator.
struct NoiseModel {
  enum class Kind { Identity, Ar1 };
  Kind kind = Kind::Identity;
  double rho = 0.0;

  static NoiseModel identity() { return {}; }
  static NoiseModel ar1(double rho);

  /// Dense t x t covariance: identity, or rho^|i-j| / (1 - rho^2).
  Eigen::MatrixXd covariance(Index t) const;
};

enum class Space { Native, Standard };

/// Per-category regressor maps, stored as columns of an m x p matrix.
struct CorrelationMap {
  Eigen::MatrixXd maps;
  Space space = Space::Native;

  Index p() const { return maps.cols(); }
  Index voxels() const { return maps.rows(); }
};

/// Generalized least squares fit of F = D B^T + e under the given noise model.
///
/// Solved by whitening with the Cholesky factor of the covariance followed by a
/// QR least-squares solve. Throws NumericalError (with a condition estimate)
/// when the whitened design is rank deficient, ArgumentError when t < p.
CorrelationMap estimate_regressors(const BoldSeries& f, const DesignMatrix& d, const NoiseModel& noise);
CorrelationMap estimate_regressors(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d, const NoiseModel& noise);

/// Lag-1 autocorrelation of pooled OLS residuals, clamped to [-0.95, 0.95].
double estimate_ar1_rho(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d);

/// Appends a constant column; the fitted intercept is dropped from the returned map.
CorrelationMap estimate_regressors_with_intercept(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d,
                                                  const NoiseModel& noise);

}  // namespace mrnr

#include "mrnr/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "mrnr/errors.hpp"

namespace mrnr {

namespace {

double gamma_pdf(double x, double shape, double scale) {
  if (x <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(x) - x / scale - std::lgamma(shape) - shape * std::log(scale));
}

}  // namespace

HrfKernel canonical_hrf(double tr_seconds, double length_seconds, const HrfParams& params) {
  if (!(tr_seconds > 0.0) || !std::isfinite(tr_seconds)) throw ArgumentError("HRF tr_seconds must be > 0");
  if (!(length_seconds >= tr_seconds) || !std::isfinite(length_seconds))
    throw ArgumentError("HRF length must be at least one TR");
  const auto n = Index(std::floor(length_seconds / tr_seconds + 1e-9));
  HrfKernel h;
  h.tr_seconds = tr_seconds;
  h.samples.resize(n);
  for (Index k = 0; k < n; ++k) {
    const double s = double(k) * tr_seconds;
    h.samples[k] =
        gamma_pdf(s, params.peak_delay / params.peak_dispersion, params.peak_dispersion) -
        params.undershoot_ratio *
            gamma_pdf(s, params.undershoot_delay / params.undershoot_dispersion, params.undershoot_dispersion);
  }
  const double peak = h.samples.maxCoeff(&h.peak_index);
  if (!(peak > 0.0)) throw ArgumentError("HRF has no positive sample at this TR/length");
  h.samples /= peak;
  return h;
}

DesignMatrix build_design(const OnsetSchedule& schedule, const HrfKernel& hrf, Index t) {
  if (t < 1) throw ArgumentError("design length must be positive");
  if (hrf.samples.size() == 0 || !hrf.samples.allFinite()) throw ArgumentError("HRF kernel is empty or non-finite");
  schedule.validate(t);
  DesignMatrix d;
  d.columns = Eigen::MatrixXd::Zero(t, schedule.category_count());
  d.names = schedule.names();
  const Index klen = hrf.samples.size();
  for (Index c = 0; c < schedule.category_count(); ++c) {
    const auto& cat = schedule.categories[std::size_t(c)];
    Eigen::VectorXd box = Eigen::VectorXd::Zero(t);
    for (std::size_t e = 0; e < cat.onsets.size(); ++e) box.segment(cat.onsets[e], cat.durations[e]).setOnes();
    auto col = d.columns.col(c);
    for (Index s = 0; s < t; ++s) {
      if (box[s] == 0.0) continue;
      const Index len = std::min(klen, t - s);
      col.segment(s, len) += box[s] * hrf.samples.head(len);
    }
  }
  return d;
}

NoiseModel NoiseModel::ar1(double rho) {
  if (!(rho > -1.0 && rho < 1.0)) throw ArgumentError("AR(1) coefficient must lie in (-1, 1)");
  return {Kind::Ar1, rho};
}

Eigen::MatrixXd NoiseModel::covariance(Index t) const {
  if (kind == Kind::Identity) return Eigen::MatrixXd::Identity(t, t);
  Eigen::MatrixXd s(t, t);
  const double scale = 1.0 / (1.0 - rho * rho);
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < t; ++j) s(i, j) = scale * std::pow(rho, double(std::abs(i - j)));
  return s;
}

CorrelationMap estimate_regressors(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d, const NoiseModel& noise) {
  const Index t = d.rows(), p = d.cols();
  if (p < 1) throw ArgumentError("design has no columns");
  if (f.rows() != t)
    throw ArgumentError("series has " + std::to_string(f.rows()) + " samples but design has " + std::to_string(t));
  if (t < p) throw ArgumentError("need t >= p, got t = " + std::to_string(t) + ", p = " + std::to_string(p));

  Eigen::MatrixXd dw = d;
  Eigen::MatrixXd fw = f;
  if (noise.kind != NoiseModel::Kind::Identity) {
    Eigen::LLT<Eigen::MatrixXd> chol(noise.covariance(t));
    if (chol.info() != Eigen::Success) throw NumericalError("noise covariance is not positive definite");
    chol.matrixL().solveInPlace(dw);
    chol.matrixL().solveInPlace(fw);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dw);
  const auto& sv = svd.singularValues();
  const double cond = sv[p - 1] > 0.0 ? sv[0] / sv[p - 1] : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12))
    throw NumericalError("design is rank deficient (condition estimate " + std::to_string(cond) + ")");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dw);
  CorrelationMap out;
  out.maps = qr.solve(fw).transpose();
  out.space = Space::Native;
  return out;
}

CorrelationMap estimate_regressors(const BoldSeries& f, const DesignMatrix& d, const NoiseModel& noise) {
  f.validate();
  return estimate_regressors(f.samples, d.columns, noise);
}

CorrelationMap estimate_regressors_with_intercept(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d,
                                                  const NoiseModel& noise) {
  Eigen::MatrixXd augmented(d.rows(), d.cols() + 1);
  augmented << d, Eigen::VectorXd::Ones(d.rows());
  auto fit = estimate_regressors(f, augmented, noise);
  fit.maps.conservativeResize(Eigen::NoChange, d.cols());
  return fit;
}

double estimate_ar1_rho(const Eigen::MatrixXd& f, const Eigen::MatrixXd& d) {
  const auto fit = estimate_regressors(f, d, NoiseModel::identity());
  const Eigen::MatrixXd resid = f - d * fit.maps.transpose();
  const Index t = resid.rows();
  if (t < 2) return 0.0;
  const double lag1 = (resid.topRows(t - 1).array() * resid.bottomRows(t - 1).array()).sum();
  const double lag0 = resid.squaredNorm();
  if (lag0 == 0.0) return 0.0;
  return std::clamp(lag1 / lag0, -0.95, 0.95);
}

}  // namespace mrnr

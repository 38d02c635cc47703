#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/errors.hpp"
#include "mrnr/feature.hpp"

namespace mrnr {

/// Training data cannot produce a classifier (one class, too few rows).
class TrainingError : public DataError {
 public:
  using DataError::DataError;
};

struct SvmOptions {
  int max_iterations = 10000;
  double optimality_tolerance = 1e-9;
  int refactor_every = 50;
  bool record_trace = false;
};

/// Result of minimizing C * sum_j max(0, 1 - y_j x_j.w) + ||w||_1.
struct SvmSolution {
  Eigen::VectorXd weights;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after the start and after every pivot
};

/// Value of the L1-regularized hinge objective (no intercept).
double l1svm_objective(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y,
                       const Eigen::Ref<const Eigen::VectorXd>& w, double c);

/// Exact minimizer of the L1-SVM objective.
///
/// The objective is piecewise linear, so it is solved as the linear program
///   min C 1'xi + 1'(u + v)  s.t.  xi_j + y_j x_j.(u - v) - s_j = 1,  all >= 0
/// by a dense primal simplex started from w = 0 (objective C * rows). Every
/// pivot is non-increasing in the objective. Entering columns follow Dantzig's
/// rule, falling back to Bland's rule after a run of degenerate pivots; the
/// basis is refactorized periodically and before the final optimality check.
/// Column order pairs u_k with v_k so that flipping every label mirrors the
/// pivot sequence exactly.
SvmSolution solve_l1svm(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y, double c,
                        const SvmOptions& options = {});

struct RegionClassifier {
  int region_id = 0;
  Eigen::VectorXd weights;  // one per region voxel, plus a trailing bias when trained with one
  double c = 1.0;
};

/// Throws ArgumentError for c <= 0, TrainingError for < 2 rows or a single class,
/// NumericalError if the solver fails to converge.
RegionClassifier train_region_svm(int region_id, const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y,
                                  double c, bool append_bias = false, const SvmOptions& options = {});

/// Signed decision value x.w (+ bias when the classifier carries one).
double region_decision(const RegionClassifier& clf, const Eigen::Ref<const Eigen::VectorXd>& x);

struct BagResult {
  double score = 0.0;
  int label = -1;
};

/// Mean of the region decisions; label is +1 only for a strictly positive mean.
BagResult combine_decisions(std::span<const double> decisions);

struct EnsembleModel {
  std::string positive_label;
  double c = 1.0;
  bool append_bias = false;
  std::vector<RegionClassifier> classifiers;  // ascending region id
};

BagResult bag(const EnsembleModel& model, const FeatureLayout& layout, const Eigen::Ref<const Eigen::VectorXd>& row);

/// One classifier per layout region that carries any non-zero training value.
/// Regions are trained on up to `jobs` threads; the result does not depend on `jobs`.
EnsembleModel train_ensemble(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const int> y,
                             const FeatureLayout& layout, const std::string& positive_label, double c,
                             bool append_bias = false, int jobs = 1, const SvmOptions& options = {});

void write_model(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel read_model(const std::filesystem::path& path);

}  // namespace mrnr

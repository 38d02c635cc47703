#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mrnr/feature.hpp"
#include "mrnr/model.hpp"
#include "mrnr/pipeline.hpp"

namespace mrnr {

/// Fraction of exact matches; ArgumentError on empty or unequal inputs.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Rank-based area under the ROC curve, P(s+ > s-) + P(s+ = s-) / 2.
/// Throws DataError when either class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Category-mean correlation structure in voxel space and feature space.
struct CorrelationResult {
  std::vector<std::string> categories;
  Eigen::MatrixXd voxel;    // p x p Pearson correlation of raw-snapshot category means
  Eigen::MatrixXd feature;  // p x p Pearson correlation of feature-row category means
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> voxel_undefined;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> feature_undefined;

  /// Mean |off-diagonal| over defined entries.
  static double mean_abs_off_diagonal(const Eigen::MatrixXd& m,
                                      const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& undefined);
};

/// Rows of `features` and `raw` are labelled by `feature_categories` / `raw_categories`.
/// Entries involving a zero-variance category mean are NaN and flagged undefined.
CorrelationResult correlation_matrices(const Eigen::Ref<const Eigen::MatrixXd>& features,
                                       std::span<const std::string> feature_categories,
                                       const Eigen::Ref<const Eigen::MatrixXd>& raw,
                                       std::span<const std::string> raw_categories,
                                       const std::vector<std::string>& categories);

struct FoldResult {
  std::string subject_id;
  bool completed = false;
  std::string diagnostic;
  double acc = 0.0;
  double auc = 0.0;
  Index tp = 0, fp = 0, tn = 0, fn = 0;
  Index train_rows = 0;
  Index test_rows = 0;
  Index classifiers = 0;
};

struct SnapshotScore {
  std::string snapshot_id;
  std::string subject_id;
  std::string category;
  int label = -1;
  double score = 0.0;
  int predicted = -1;
};

struct EvalReport {
  std::string target;
  std::vector<FoldResult> folds;  // sorted by subject id
  double acc = 0.0;
  double auc = 0.0;
  double acc_std = 0.0;  // population std over completed folds
  double auc_std = 0.0;
  Index completed_folds = 0;
  std::vector<std::string> warnings;
  nlohmann::ordered_json config;
  std::vector<SnapshotScore> scores;

  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
  std::string scores_csv() const;
};

struct LooOptions {
  double svm_c = 1.0;
  bool append_bias = false;
  int jobs = 1;
  std::optional<std::uint64_t> shuffle_seed;  // permute labels across all snapshots (null control)
  SvmOptions svm;
  std::vector<EnsembleModel>* fold_models = nullptr;  // if set, receives one model per fold (empty when failed)
};

/// Row indices used to train the fold that holds out `subject_id`, in canonical
/// (subject id, snapshot id) order.
std::vector<Index> training_rows(const FeatureTable& table, const std::string& subject_id);

/// Subject-level leave-one-out over precomputed per-snapshot features.
///
/// Each subject's features depend only on that subject's own data, the atlas
/// and the reference, so extracting them once is equivalent to re-extracting
/// them inside every fold.
EvalReport loo_evaluate(const FeatureTable& table, const std::string& target, const LooOptions& options);

/// Full pipeline: per-subject extraction, then leave-one-subject-out.
EvalReport loo_evaluate(const Experiment& exp, const std::string& target,
                        std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// +1 for rows of `target`, -1 otherwise; optionally permuted with `shuffle_seed`.
std::vector<int> target_labels(std::span<const std::string> categories, const std::string& target,
                               std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace mrnr

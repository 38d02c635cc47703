#include "mrnr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mrnr/errors.hpp"
#include "mrnr/parallel.hpp"
#include "mrnr/text.hpp"

namespace mrnr {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ArgumentError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw ArgumentError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return double(hits) / double(labels.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * double(i + 1 + j);  // average of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] > 0) {
        positive_rank_sum += mid_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC is undefined when one class is absent");
  return (positive_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

namespace {

Eigen::MatrixXd category_means(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const std::string> labels,
                               const std::vector<std::string>& categories) {
  if (Index(labels.size()) != rows.rows()) throw ArgumentError("row labels differ in length from rows");
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(rows.cols(), Index(categories.size()));
  std::vector<Index> counts(categories.size(), 0);
  for (Index r = 0; r < rows.rows(); ++r) {
    auto it = std::find(categories.begin(), categories.end(), labels[std::size_t(r)]);
    if (it == categories.end()) throw LookupError("row category '" + labels[std::size_t(r)] + "' is unknown");
    const auto c = std::size_t(it - categories.begin());
    means.col(Index(c)) += rows.row(r).transpose();
    ++counts[c];
  }
  for (std::size_t c = 0; c < categories.size(); ++c)
    if (counts[c] > 0) means.col(Index(c)) /= double(counts[c]);
  return means;
}

void pearson(const Eigen::MatrixXd& means, Eigen::MatrixXd& corr,
             Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& undefined) {
  const Index p = means.cols();
  Eigen::MatrixXd centered = means.rowwise() - means.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  corr.resize(p, p);
  undefined.setConstant(p, p, false);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) {
      if (!(norms[i] > 0.0) || !(norms[j] > 0.0)) {
        corr(i, j) = std::numeric_limits<double>::quiet_NaN();
        undefined(i, j) = true;
      } else {
        corr(i, j) = i == j ? 1.0 : centered.col(i).dot(centered.col(j)) / (norms[i] * norms[j]);
      }
    }
}

}  // namespace

double CorrelationResult::mean_abs_off_diagonal(const Eigen::MatrixXd& m,
                                                const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& undefined) {
  double sum = 0.0;
  Index n = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (i != j && !undefined(i, j)) {
        sum += std::abs(m(i, j));
        ++n;
      }
  return n ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
}

CorrelationResult correlation_matrices(const Eigen::Ref<const Eigen::MatrixXd>& features,
                                       std::span<const std::string> feature_categories,
                                       const Eigen::Ref<const Eigen::MatrixXd>& raw,
                                       std::span<const std::string> raw_categories,
                                       const std::vector<std::string>& categories) {
  if (categories.size() < 2) throw ArgumentError("correlation analysis needs at least 2 categories");
  CorrelationResult r;
  r.categories = categories;
  pearson(category_means(raw, raw_categories, categories), r.voxel, r.voxel_undefined);
  pearson(category_means(features, feature_categories, categories), r.feature, r.feature_undefined);
  return r;
}

std::vector<int> target_labels(std::span<const std::string> categories, const std::string& target,
                               std::optional<std::uint64_t> shuffle_seed) {
  std::vector<int> y;
  y.reserve(categories.size());
  for (const auto& c : categories) y.push_back(c == target ? 1 : -1);
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    // Fisher-Yates with an explicit draw so the permutation is stable across standard libraries
    for (std::size_t i = y.size(); i > 1; --i) std::swap(y[i - 1], y[std::size_t(rng() % i)]);
  }
  return y;
}

std::vector<Index> training_rows(const FeatureTable& table, const std::string& subject_id) {
  std::vector<Index> rows;
  for (Index r = 0; r < table.rows(); ++r)
    if (table.subject_ids[std::size_t(r)] != subject_id) rows.push_back(r);
  std::sort(rows.begin(), rows.end(), [&](Index a, Index b) {
    const auto ka = std::tie(table.subject_ids[std::size_t(a)], table.snapshot_ids[std::size_t(a)]);
    const auto kb = std::tie(table.subject_ids[std::size_t(b)], table.snapshot_ids[std::size_t(b)]);
    return ka < kb;
  });
  return rows;
}

EvalReport loo_evaluate(const FeatureTable& table, const std::string& target, const LooOptions& options) {
  if (std::find(table.categories.begin(), table.categories.end(), target) == table.categories.end())
    throw LookupError("target category '" + target + "' does not occur in the feature table");

  // labels are drawn over the canonical snapshot order so input row order cannot change them
  std::vector<Index> canonical(std::size_t(table.rows()));
  std::iota(canonical.begin(), canonical.end(), 0);
  std::sort(canonical.begin(), canonical.end(), [&](Index a, Index b) {
    return std::tie(table.subject_ids[std::size_t(a)], table.snapshot_ids[std::size_t(a)]) <
           std::tie(table.subject_ids[std::size_t(b)], table.snapshot_ids[std::size_t(b)]);
  });
  std::vector<std::string> canonical_categories;
  for (Index r : canonical) canonical_categories.push_back(table.categories[std::size_t(r)]);
  const auto canonical_labels = target_labels(canonical_categories, target, options.shuffle_seed);
  std::vector<int> labels(std::size_t(table.rows()));
  for (std::size_t i = 0; i < canonical.size(); ++i) labels[std::size_t(canonical[i])] = canonical_labels[i];

  std::vector<std::string> subjects(table.subject_ids.begin(), table.subject_ids.end());
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2) throw DataError("leave-one-subject-out needs at least 2 subjects");

  EvalReport report;
  report.target = target;
  report.folds.resize(subjects.size());
  std::vector<std::vector<SnapshotScore>> fold_scores(subjects.size());
  if (options.fold_models) options.fold_models->assign(subjects.size(), EnsembleModel{});

  for (std::size_t u = 0; u < subjects.size(); ++u) {
    auto& fold = report.folds[u];
    fold.subject_id = subjects[u];
    const auto train = training_rows(table, subjects[u]);
    std::vector<Index> test;
    for (Index r : canonical)
      if (table.subject_ids[std::size_t(r)] == subjects[u]) test.push_back(r);

    Eigen::MatrixXd x(Index(train.size()), table.values.cols());
    std::vector<int> y;
    for (std::size_t i = 0; i < train.size(); ++i) {
      x.row(Index(i)) = table.values.row(train[i]);
      y.push_back(labels[std::size_t(train[i])]);
    }
    fold.train_rows = Index(train.size());
    fold.test_rows = Index(test.size());

    EnsembleModel model;
    try {
      model = train_ensemble(x, y, table.layout, target, options.svm_c, options.append_bias, options.jobs,
                             options.svm);
    } catch (const TrainingError& e) {
      fold.diagnostic = std::string("training failed: ") + e.what();
      continue;
    }
    fold.classifiers = Index(model.classifiers.size());
    if (options.fold_models) (*options.fold_models)[u] = model;

    std::vector<double> scores;
    std::vector<int> truth, predicted;
    for (Index r : test) {
      const auto result = bag(model, table.layout, table.values.row(r).transpose());
      const int label = labels[std::size_t(r)];
      scores.push_back(result.score);
      truth.push_back(label);
      predicted.push_back(result.label);
      fold_scores[u].push_back({table.snapshot_ids[std::size_t(r)], table.subject_ids[std::size_t(r)],
                                table.categories[std::size_t(r)], label, result.score, result.label});
      if (label > 0)
        (result.label > 0 ? fold.tp : fold.fn)++;
      else
        (result.label > 0 ? fold.fp : fold.tn)++;
    }
    if (test.empty()) {
      fold.diagnostic = "held-out subject has no snapshots";
      continue;
    }
    fold.acc = accuracy(predicted, truth);
    try {
      fold.auc = mrnr::auc(scores, truth);
    } catch (const DataError&) {
      fold.diagnostic = "held-out subject lacks one class; AUC undefined";
      continue;
    }
    fold.completed = true;
  }

  std::vector<double> accs, aucs;
  for (std::size_t u = 0; u < subjects.size(); ++u) {
    const auto& fold = report.folds[u];
    for (auto& s : fold_scores[u]) report.scores.push_back(std::move(s));
    if (!fold.completed) {
      report.warnings.push_back("fold " + fold.subject_id + " excluded: " + fold.diagnostic);
      continue;
    }
    accs.push_back(fold.acc);
    aucs.push_back(fold.auc);
  }
  report.completed_folds = Index(accs.size());
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) {
      mean = sd = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    sd = std::sqrt(ss / double(v.size()));
  };
  mean_std(accs, report.acc, report.acc_std);
  mean_std(aucs, report.auc, report.auc_std);
  if (accs.empty()) report.warnings.push_back("no fold completed");
  return report;
}

EvalReport loo_evaluate(const Experiment& exp, const std::string& target, std::optional<std::uint64_t> shuffle_seed) {
  exp.validate();
  const auto layout = FeatureLayout::from_atlas(exp.atlas);
  std::vector<SubjectFeatures> per_subject(exp.subjects.size());
  parallel_for(Index(exp.subjects.size()), exp.params.jobs, [&](Index u) {
    per_subject[std::size_t(u)] =
        process_subject(exp.subjects[std::size_t(u)], exp.atlas, layout, exp.reference, exp.params);
  });
  LooOptions options;
  options.svm_c = exp.params.svm_c;
  options.append_bias = exp.params.append_bias;
  options.jobs = exp.params.jobs;
  options.shuffle_seed = shuffle_seed;
  return loo_evaluate(make_feature_table(per_subject, layout), target, options);
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["target"] = target;
  j["acc"] = acc;
  j["auc"] = auc;
  j["acc_std"] = acc_std;
  j["auc_std"] = auc_std;
  j["completed_folds"] = completed_folds;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) {
    nlohmann::ordered_json fj;
    fj["subject_id"] = f.subject_id;
    fj["completed"] = f.completed;
    if (!f.diagnostic.empty()) fj["diagnostic"] = f.diagnostic;
    fj["acc"] = f.acc;
    fj["auc"] = f.auc;
    fj["confusion"] = {{"tp", f.tp}, {"fp", f.fp}, {"tn", f.tn}, {"fn", f.fn}};
    fj["train_rows"] = f.train_rows;
    fj["test_rows"] = f.test_rows;
    fj["classifiers"] = f.classifiers;
    j["folds"].push_back(fj);
  }
  j["warnings"] = warnings;
  j["config"] = config;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[160];
  out << "target: " << target << "\n";
  std::snprintf(line, sizeof line, "%-16s %6s %6s %4s %4s %4s %4s  %s\n", "subject", "ACC", "AUC", "TP", "FP", "TN",
                "FN", "status");
  out << line;
  for (const auto& f : folds) {
    std::snprintf(line, sizeof line, "%-16s %6.4f %6.4f %4ld %4ld %4ld %4ld  %s\n", f.subject_id.c_str(), f.acc, f.auc,
                  long(f.tp), long(f.fp), long(f.tn), long(f.fn), f.completed ? "ok" : "excluded");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %6.4f %6.4f   (+- %.4f / %.4f over %ld folds)\n", "mean", acc, auc, acc_std,
                auc_std, long(completed_folds));
  out << line;
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string EvalReport::scores_csv() const {
  std::ostringstream out;
  out << "snapshot_id,subject_id,category,label,score,predicted\n";
  for (const auto& s : scores)
    out << s.snapshot_id << ',' << s.subject_id << ',' << s.category << ',' << s.label << ','
        << format_double(s.score) << ',' << s.predicted << '\n';
  return out.str();
}

}  // namespace mrnr

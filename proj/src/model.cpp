#include "mrnr/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "mrnr/parallel.hpp"
#include "mrnr/text.hpp"

namespace mrnr {

double l1svm_objective(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y,
                       const Eigen::Ref<const Eigen::VectorXd>& w, double c) {
  const Eigen::VectorXd margins = x * w;
  double hinge = 0.0;
  for (Index j = 0; j < x.rows(); ++j) hinge += std::max(0.0, 1.0 - double(y[std::size_t(j)]) * margins[j]);
  return c * hinge + w.lpNorm<1>();
}

namespace {

/// Dense tableau simplex for the L1-SVM linear program.
class L1SvmSimplex {
 public:
  L1SvmSimplex(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y, double c, const SvmOptions& opt)
      : rows_(x.rows()), features_(x.cols()), opt_(opt) {
    const Index n = 2 * rows_ + 2 * features_;
    a_.setZero(rows_, n);
    cost_.setZero(n);
    for (Index j = 0; j < rows_; ++j) {
      a_(j, xi(j)) = 1.0;
      a_(j, slack(j)) = -1.0;
      cost_[xi(j)] = c;
      for (Index k = 0; k < features_; ++k) {
        const double v = double(y[std::size_t(j)]) * x(j, k);
        a_(j, u(k)) = v;
        a_(j, v_col(k)) = -v;
      }
    }
    for (Index k = 0; k < features_; ++k) cost_[u(k)] = cost_[v_col(k)] = 1.0;
    basis_.resize(std::size_t(rows_));
    for (Index j = 0; j < rows_; ++j) basis_[std::size_t(j)] = xi(j);
    refactor();
  }

  SvmSolution run() {
    SvmSolution sol;
    if (opt_.record_trace) sol.trace.push_back(objective());
    int degenerate_run = 0;
    int since_refactor = 0;
    while (sol.iterations < opt_.max_iterations) {
      Index enter = choose_entering(degenerate_run > 50);
      if (enter < 0) {
        // confirm optimality against a fresh factorization before stopping
        if (since_refactor == 0) {
          sol.converged = true;
          break;
        }
        refactor();
        since_refactor = 0;
        continue;
      }
      const Index leave = choose_leaving(enter);
      if (leave < 0) throw NumericalError("L1-SVM simplex: unbounded direction (numerical breakdown)");
      const bool degenerate = rhs_[leave] <= 1e-14;
      pivot(leave, enter);
      degenerate_run = degenerate ? degenerate_run + 1 : 0;
      ++sol.iterations;
      if (++since_refactor >= opt_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
      if (opt_.record_trace) sol.trace.push_back(objective());
    }
    sol.weights = weights();
    sol.objective = objective();
    return sol;
  }

 private:
  Index xi(Index j) const { return j; }
  Index u(Index k) const { return rows_ + 2 * k; }
  Index v_col(Index k) const { return rows_ + 2 * k + 1; }
  Index slack(Index j) const { return rows_ + 2 * features_ + j; }

  double objective() const {
    double obj = 0.0;
    for (Index i = 0; i < rows_; ++i) obj += cost_[basis_[std::size_t(i)]] * rhs_[i];
    return obj;
  }

  Eigen::VectorXd weights() const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(features_);
    for (Index i = 0; i < rows_; ++i) {
      const Index col = basis_[std::size_t(i)];
      if (col < rows_ || col >= slack(0)) continue;
      const Index k = (col - rows_) / 2;
      w[k] += ((col - rows_) % 2 == 0 ? 1.0 : -1.0) * std::max(0.0, rhs_[i]);
    }
    return w;
  }

  void refactor() {
    Eigen::MatrixXd b(rows_, rows_);
    Eigen::VectorXd cb(rows_);
    for (Index i = 0; i < rows_; ++i) {
      b.col(i) = a_.col(basis_[std::size_t(i)]);
      cb[i] = cost_[basis_[std::size_t(i)]];
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
    tableau_ = lu.solve(a_);
    rhs_ = lu.solve(Eigen::VectorXd::Ones(rows_));
    reduced_ = cost_.transpose() - cb.transpose() * tableau_;
    for (Index i = 0; i < rows_; ++i) reduced_[basis_[std::size_t(i)]] = 0.0;
  }

  Index choose_entering(bool bland) const {
    Index best = -1;
    double best_value = -opt_.optimality_tolerance;
    for (Index col = 0; col < reduced_.size(); ++col) {
      if (reduced_[col] < best_value) {
        if (bland) return col;
        best = col;
        best_value = reduced_[col];
      }
    }
    return best;
  }

  Index choose_leaving(Index enter) const {
    constexpr double kPivotTol = 1e-11;
    Index best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < rows_; ++i) {
      const double a = tableau_(i, enter);
      if (a <= kPivotTol) continue;
      const double ratio = std::max(0.0, rhs_[i]) / a;
      if (best < 0 || ratio < best_ratio - 1e-15 * (1.0 + best_ratio) ||
          (ratio <= best_ratio + 1e-15 * (1.0 + best_ratio) && basis_[std::size_t(i)] < basis_[std::size_t(best)])) {
        best = i;
        best_ratio = ratio;
      }
    }
    return best;
  }

  void pivot(Index r, Index e) {
    const double p = tableau_(r, e);
    tableau_.row(r) /= p;
    rhs_[r] /= p;
    for (Index i = 0; i < rows_; ++i) {
      if (i == r) continue;
      const double f = tableau_(i, e);
      if (f == 0.0) continue;
      tableau_.row(i) -= f * tableau_.row(r);
      rhs_[i] -= f * rhs_[r];
      tableau_(i, e) = 0.0;
    }
    const double f = reduced_[e];
    reduced_ -= f * tableau_.row(r).transpose();
    reduced_[e] = 0.0;
    basis_[std::size_t(r)] = e;
  }

  Index rows_;
  Index features_;
  SvmOptions opt_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd cost_;
  Eigen::MatrixXd tableau_;
  Eigen::VectorXd rhs_;
  Eigen::VectorXd reduced_;
  std::vector<Index> basis_;
};

void check_training_input(Index rows, std::span<const int> y, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("SVM trade-off C must be positive, got " + std::to_string(c));
  if (Index(y.size()) != rows) throw ArgumentError("label count differs from row count");
  if (rows < 2) throw TrainingError("need at least 2 training rows");
  bool pos = false, neg = false;
  for (int label : y) {
    if (label != 1 && label != -1) throw ArgumentError("labels must be +1 or -1");
    (label > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw TrainingError("training data contains a single class");
}

}  // namespace

SvmSolution solve_l1svm(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y, double c,
                        const SvmOptions& options) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("SVM trade-off C must be positive, got " + std::to_string(c));
  if (Index(y.size()) != x.rows()) throw ArgumentError("label count differs from row count");
  if (!x.allFinite()) throw ArgumentError("training features must be finite");
  if (x.rows() == 0) return {Eigen::VectorXd::Zero(x.cols()), 0.0, 0, true, {}};
  return L1SvmSimplex(x, y, c, options).run();
}

RegionClassifier train_region_svm(int region_id, const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> y,
                                  double c, bool append_bias, const SvmOptions& options) {
  check_training_input(x.rows(), y, c);
  SvmSolution sol;
  if (append_bias) {
    Eigen::MatrixXd xb(x.rows(), x.cols() + 1);
    xb << x, Eigen::VectorXd::Ones(x.rows());
    sol = solve_l1svm(xb, y, c, options);
  } else {
    sol = solve_l1svm(x, y, c, options);
  }
  if (!sol.converged)
    throw NumericalError("L1-SVM for region " + std::to_string(region_id) + " did not converge in " +
                         std::to_string(options.max_iterations) + " iterations");
  return {region_id, std::move(sol.weights), c};
}

double region_decision(const RegionClassifier& clf, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == clf.weights.size()) return x.dot(clf.weights);
  if (x.size() + 1 == clf.weights.size()) return x.dot(clf.weights.head(x.size())) + clf.weights[x.size()];
  throw ArgumentError("region " + std::to_string(clf.region_id) + ": feature length " + std::to_string(x.size()) +
                      " does not match " + std::to_string(clf.weights.size()) + " weights");
}

BagResult combine_decisions(std::span<const double> decisions) {
  if (decisions.empty()) throw ArgumentError("cannot bag an empty classifier list");
  double sum = 0.0;
  for (double d : decisions) sum += d;
  BagResult r;
  r.score = sum / double(decisions.size());
  r.label = r.score > 0.0 ? 1 : -1;
  return r;
}

BagResult bag(const EnsembleModel& model, const FeatureLayout& layout, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != layout.total()) throw ArgumentError("feature row length differs from layout");
  std::vector<double> decisions;
  decisions.reserve(model.classifiers.size());
  for (const auto& clf : model.classifiers) {
    const auto& e = layout.find(clf.region_id);
    decisions.push_back(region_decision(clf, row.segment(e.start, e.length)));
  }
  return combine_decisions(decisions);
}

EnsembleModel train_ensemble(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const int> y,
                             const FeatureLayout& layout, const std::string& positive_label, double c,
                             bool append_bias, int jobs, const SvmOptions& options) {
  check_training_input(rows.rows(), y, c);
  if (rows.cols() != layout.total()) throw ArgumentError("feature matrix width differs from layout");
  std::vector<const FeatureLayout::Entry*> trainable;
  for (const auto& e : layout.entries)
    if (!rows.middleCols(e.start, e.length).isZero(0.0)) trainable.push_back(&e);
  if (trainable.empty()) throw TrainingError("no region carries any non-zero training feature");

  EnsembleModel model;
  model.positive_label = positive_label;
  model.c = c;
  model.append_bias = append_bias;
  model.classifiers.resize(trainable.size());
  parallel_for(Index(trainable.size()), jobs, [&](Index i) {
    const auto* e = trainable[std::size_t(i)];
    model.classifiers[std::size_t(i)] =
        train_region_svm(e->region_id, rows.middleCols(e->start, e->length), y, c, append_bias, options);
  });
  return model;
}

void write_model(const EnsembleModel& model, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "positive_label," << model.positive_label << '\n'
      << "C," << format_double(model.c) << '\n'
      << "append_bias," << (model.append_bias ? 1 : 0) << '\n'
      << "regions," << model.classifiers.size() << '\n';
  for (const auto& clf : model.classifiers) {
    out << clf.region_id << ',' << clf.weights.size();
    for (Index k = 0; k < clf.weights.size(); ++k) out << ',' << format_double(clf.weights[k]);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

EnsembleModel read_model(const std::filesystem::path& path) {
  const auto lines = read_lines(read_file(path));
  const std::string name = path.string();
  if (lines.size() < 4) throw FormatError(name + ": model header is incomplete");
  auto header = [&](std::size_t n, const std::string& key) {
    const auto f = split_fields(lines[n]);
    if (f.size() != 2 || f[0] != key) throw FormatError(name + ":" + std::to_string(n + 1) + ": expected '" + key + ",...'");
    return f[1];
  };
  EnsembleModel model;
  model.positive_label = header(0, "positive_label");
  model.c = parse_double(header(1, "C"), name + ": C");
  model.append_bias = parse_int(header(2, "append_bias"), name + ": append_bias") != 0;
  const auto count = std::size_t(parse_int(header(3, "regions"), name + ": regions"));
  if (lines.size() != 4 + count)
    throw FormatError(name + ": header declares " + std::to_string(count) + " regions, file has " +
                      std::to_string(lines.size() - 4));
  for (std::size_t n = 4; n < lines.size(); ++n) {
    const auto f = split_fields(lines[n]);
    const std::string where = name + ":" + std::to_string(n + 1);
    if (f.size() < 2) throw FormatError(where + ": expected region_id,n,weights...");
    RegionClassifier clf;
    clf.region_id = int(parse_int(f[0], where));
    clf.c = model.c;
    const auto len = parse_int(f[1], where);
    if (len < 0 || std::size_t(len) + 2 != f.size()) throw FormatError(where + ": weight count mismatch");
    clf.weights.resize(len);
    for (Index k = 0; k < len; ++k) clf.weights[k] = parse_double(f[std::size_t(k + 2)], where);
    model.classifiers.push_back(std::move(clf));
  }
  return model;
}

}  // namespace mrnr

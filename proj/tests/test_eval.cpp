#include <doctest.h>

#include <random>
#include <set>

#include "mrnr/errors.hpp"
#include "mrnr/eval.hpp"
#include "oracles.hpp"

using namespace mrnr;

TEST_CASE("accuracy") {
  const std::vector<int> y{1, -1, 1, -1};
  CHECK(accuracy(y, y) == 1.0);
  CHECK(accuracy(std::vector<int>{-1, 1, -1, 1}, y) == 0.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{1}, y), ArgumentError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), ArgumentError);

  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin;
  std::vector<int> a(100), b(100);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    a[i] = coin(rng) ? 1 : -1;
    b[i] = coin(rng) ? 1 : -1;
    same += a[i] == b[i];
  }
  CHECK(accuracy(a, b) == same / 100.0);
}

TEST_CASE("AUC edge cases") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{-1, -1, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{3, 3, 3, 3}, std::vector<int>{-1, 1, -1, 1}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), DataError);
}

TEST_CASE("rank AUC equals the pairwise oracle, ties included") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::normal_distribution<double> fine;
  std::bernoulli_distribution coin;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(50);
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) {
      s[i] = trial % 2 ? double(coarse(rng)) : fine(rng);
      y[i] = coin(rng) ? 1 : -1;
    }
    y[0] = 1;
    y[1] = -1;
    CHECK(std::abs(auc(s, y) - oracle::pairwise_auc(s, y)) <= 1e-12);
    if (trial % 2 == 0) {
      std::vector<double> neg;
      for (double v : s) neg.push_back(-v);
      CHECK(auc(neg, y) == doctest::Approx(1.0 - auc(s, y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("category correlation matrices") {
  const std::vector<std::string> cats{"a", "b"};
  SUBCASE("identical category means correlate fully") {
    Eigen::MatrixXd rows(4, 3);
    rows << 1, 2, 4, 1, 2, 4, 0, 1, 3, 2, 3, 5;
    const std::vector<std::string> labels{"a", "b", "a", "b"};
    const auto r = correlation_matrices(rows, labels, rows, labels, cats);
    CHECK(r.voxel(0, 1) == doctest::Approx(1.0));
    CHECK(r.feature(1, 0) == doctest::Approx(1.0));
    CHECK(r.voxel(0, 0) == 1.0);
  }
  SUBCASE("orthogonal centred means give zero") {
    Eigen::MatrixXd rows(2, 4);
    rows << 1, -1, 0, 0, 0, 0, 1, -1;
    const std::vector<std::string> labels{"a", "b"};
    const auto r = correlation_matrices(rows, labels, rows, labels, cats);
    CHECK(std::abs(r.feature(0, 1)) < 1e-15);
    CHECK((r.feature - r.feature.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero-variance mean is flagged") {
    Eigen::MatrixXd rows(2, 3);
    rows << 1, 1, 1, 0, 1, 2;
    const std::vector<std::string> labels{"a", "b"};
    const auto r = correlation_matrices(rows, labels, rows, labels, cats);
    CHECK(r.feature_undefined(0, 1));
    CHECK(std::isnan(r.feature(0, 1)));
    CHECK_FALSE(r.feature_undefined(1, 1));
    CHECK(std::isnan(CorrelationResult::mean_abs_off_diagonal(r.feature, r.feature_undefined)));
  }
  SUBCASE("matches a direct covariance computation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::MatrixXd rows(30, 12);
    std::vector<std::string> labels;
    const std::vector<std::string> three{"a", "b", "c"};
    for (Index r = 0; r < 30; ++r) {
      labels.push_back(three[std::size_t(r % 3)]);
      for (Index k = 0; k < 12; ++k) rows(r, k) = n(rng);
    }
    const auto res = correlation_matrices(rows, labels, rows, labels, three);
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(12, 3);
    for (Index r = 0; r < 30; ++r) means.col(r % 3) += rows.row(r).transpose() / 10.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const Eigen::ArrayXd a = means.col(i).array() - means.col(i).mean();
        const Eigen::ArrayXd b = means.col(j).array() - means.col(j).mean();
        const double c = (a * b).sum() / std::sqrt((a * a).sum() * (b * b).sum());
        CHECK(res.voxel(i, j) == doctest::Approx(c).epsilon(1e-12));
      }
  }
  CHECK_THROWS_AS(correlation_matrices(Eigen::MatrixXd(0, 2), {}, Eigen::MatrixXd(0, 2), {}, {"a"}), ArgumentError);
}

namespace {

// Two categories with class signal in region 1 and noise in region 2.
FeatureTable separable_table(int subjects, int per_class, std::uint64_t seed, bool identical_subjects) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  FeatureTable t;
  t.layout.entries = {{1, 0, 4}, {2, 4, 3}};
  const Index rows = Index(subjects) * 2 * per_class;
  t.values.resize(rows, 7);
  Index r = 0;
  Eigen::MatrixXd first(2 * per_class, 7);
  for (int u = 0; u < subjects; ++u) {
    char sid[16];
    std::snprintf(sid, sizeof sid, "sub-%02d", u + 1);
    for (int k = 0; k < 2 * per_class; ++k, ++r) {
      const bool pos = k % 2 == 0;
      Eigen::RowVectorXd row(7);
      for (Index j = 0; j < 7; ++j) row[j] = n(rng);
      row.head(4).array() += pos ? 1.0 : -1.0;
      if (identical_subjects && u > 0) row = first.row(k);
      if (u == 0) first.row(k) = row;
      t.values.row(r) = row;
      t.snapshot_ids.push_back(snapshot_id(sid, k));
      t.subject_ids.push_back(sid);
      t.categories.push_back(pos ? "a" : "b");
    }
  }
  return t;
}

FeatureTable permuted_rows(const FeatureTable& t, std::uint64_t seed) {
  std::vector<Index> order(std::size_t(t.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FeatureTable p;
  p.layout = t.layout;
  p.values.resize(t.rows(), t.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.values.row(Index(i)) = t.values.row(order[i]);
    p.snapshot_ids.push_back(t.snapshot_ids[std::size_t(order[i])]);
    p.subject_ids.push_back(t.subject_ids[std::size_t(order[i])]);
    p.categories.push_back(t.categories[std::size_t(order[i])]);
  }
  return p;
}

}  // namespace

TEST_CASE("two identical separable subjects score perfectly") {
  const auto t = separable_table(2, 6, 4, true);
  const auto r = loo_evaluate(t, "a", LooOptions{});
  REQUIRE(r.completed_folds == 2);
  CHECK(r.acc == 1.0);
  CHECK(r.auc == 1.0);
  CHECK(r.folds[0].tp == 6);
  CHECK(r.folds[0].tn == 6);
}

TEST_CASE("LOO results do not depend on row or subject order") {
  const auto t = separable_table(5, 5, 5, false);
  const auto a = loo_evaluate(t, "a", LooOptions{});
  const auto b = loo_evaluate(permuted_rows(t, 99), "a", LooOptions{});
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.scores_csv() == b.scores_csv());
  LooOptions shuffled;
  shuffled.shuffle_seed = 8;
  CHECK(loo_evaluate(t, "a", shuffled).to_json().dump() ==
        loo_evaluate(permuted_rows(t, 3), "a", shuffled).to_json().dump());
}

TEST_CASE("held-out snapshots never reach training") {
  const auto t = separable_table(4, 3, 6, false);
  for (int u = 1; u <= 4; ++u) {
    char sid[16];
    std::snprintf(sid, sizeof sid, "sub-%02d", u);
    const auto rows = training_rows(t, sid);
    std::set<std::string> ids;
    for (Index r : rows) {
      CHECK(t.subject_ids[std::size_t(r)] != sid);
      ids.insert(t.snapshot_ids[std::size_t(r)]);
    }
    CHECK(Index(rows.size()) == t.rows() - 6);
    for (Index r = 0; r < t.rows(); ++r)
      if (t.subject_ids[std::size_t(r)] == sid) CHECK(ids.count(t.snapshot_ids[std::size_t(r)]) == 0);
  }
}

TEST_CASE("aggregate is the mean over completed folds and single-class folds are excluded") {
  auto t = separable_table(4, 3, 7, false);
  // sub-04 only shows category a, so its AUC is undefined
  for (Index r = 0; r < t.rows(); ++r)
    if (t.subject_ids[std::size_t(r)] == "sub-04") t.categories[std::size_t(r)] = "a";
  const auto r = loo_evaluate(t, "a", LooOptions{});
  CHECK(r.completed_folds == 3);
  CHECK_FALSE(r.folds[3].completed);
  CHECK_FALSE(r.folds[3].diagnostic.empty());
  CHECK_FALSE(r.warnings.empty());
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) sum += r.folds[std::size_t(i)].acc;
  CHECK(r.acc == doctest::Approx(sum / 3.0));
  CHECK(r.acc >= 0.0);
  CHECK(r.acc <= 1.0);
}

TEST_CASE("label permutation is seeded and balanced") {
  std::vector<std::string> cats;
  for (int i = 0; i < 40; ++i) cats.push_back(i % 4 ? "b" : "a");
  const auto plain = target_labels(cats, "a");
  const auto s1 = target_labels(cats, "a", 3);
  const auto s2 = target_labels(cats, "a", 3);
  const auto s3 = target_labels(cats, "a", 4);
  CHECK(s1 == s2);
  CHECK(s1 != s3);
  CHECK(std::count(s1.begin(), s1.end(), 1) == std::count(plain.begin(), plain.end(), 1));
}

TEST_CASE("unknown target is a lookup error") {
  CHECK_THROWS_AS(loo_evaluate(separable_table(2, 2, 1, false), "zzz", LooOptions{}), LookupError);
}

TEST_CASE("report renders JSON, table and score dump") {
  const auto r = loo_evaluate(separable_table(3, 2, 9, false), "a", LooOptions{});
  const auto j = r.to_json();
  CHECK(j["folds"].size() == 3);
  CHECK(j["target"] == "a");
  CHECK(r.to_table().find("mean") != std::string::npos);
  const auto csv = r.scores_csv();
  CHECK(csv.rfind("snapshot_id,subject_id,category,label,score,predicted\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12);
}

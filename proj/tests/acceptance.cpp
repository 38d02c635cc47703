// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <unistd.h>

#include "mrnr/config.hpp"
#include "mrnr/eval.hpp"
#include "mrnr/feature.hpp"
#include "mrnr/glm.hpp"
#include "mrnr/model.hpp"
#include "mrnr/pipeline.hpp"
#include "mrnr/registration.hpp"
#include "mrnr/snapshot.hpp"
#include "mrnr/stages.hpp"
#include "mrnr/synth.hpp"
#include "oracles.hpp"

using namespace mrnr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Outcome gls() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> tdist(8, 64), pdist(1, 4), mdist(1, 200);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = pdist(rng);
    const int t = std::max(tdist(rng), p + 2);
    const auto d = random_matrix(rng, t, p);
    const auto f = random_matrix(rng, t, mdist(rng));
    const auto est = estimate_regressors(f, d, NoiseModel::identity());
    worst = std::max(worst, (est.maps - oracle::dense_gls(f, d, Eigen::MatrixXd::Identity(t, t))).cwiseAbs().maxCoeff());
  }
  o.require(worst <= 1e-8, fmt("identity max-abs %.3g > 1e-8", worst));
  double worst_ar = 0.0;
  for (double rho : {0.5, -0.3, 0.9}) {
    const auto d = random_matrix(rng, 64, 3);
    const auto f = random_matrix(rng, 64, 50);
    const auto est = estimate_regressors(f, d, NoiseModel::ar1(rho));
    worst_ar = std::max(worst_ar, (est.maps - oracle::dense_gls(f, d, oracle::ar1_covariance(64, rho))).cwiseAbs().maxCoeff());
  }
  o.require(worst_ar <= 1e-6, fmt("AR(1) max-abs %.3g > 1e-6", worst_ar));
  if (o.ok) o.detail = fmt("identity %.2g, AR(1) %.2g", worst, worst_ar);
  return o;
}

Outcome kernels() {
  Outcome o;
  const double expected[] = {0.05449, 0.24420, 0.40262, 0.24420, 0.05449};
  const auto g = gaussian_kernel(1.0);
  o.require(g.size() == 5, "sigma 1 kernel does not have 5 taps");
  for (int i = 0; i < 5 && o.ok; ++i)
    o.require(std::abs(g.weights[i] - expected[i]) <= 1e-5, fmt("tap %g differs by %.3g", i, g.weights[i] - expected[i]));
  for (double s : {0.3, 0.5, 1.0, 2.0, 3.7})
    o.require(std::abs(gaussian_kernel(s).weights.sum() - 1.0) <= 1e-12, fmt("sigma %g does not sum to 1", s));
  const double sigma = region_sigma(100);
  o.require(std::abs(sigma - 1.0 / (5.0 * std::log(100.0))) <= 1e-9, fmt("region sigma %.12g", sigma));
  if (o.ok) o.detail = fmt("region sigma(100) = %.10f", sigma);
  return o;
}

struct PeakStats {
  Index mismatched = 0, total = 0, within1 = 0, within2 = 0;
};

PeakStats peak_stats(const SynthConfig& cfg) {
  const auto synth = generate(cfg);
  PeakStats r;
  for (std::size_t u = 0; u < synth.experiment.subjects.size(); ++u) {
    const auto& subject = synth.experiment.subjects[u];
    const auto design = design_subject(subject, synth.experiment.params);
    const auto snaps = select_snapshots(subject, design.design, synth.experiment.params);
    for (Index c = 0; c < Index(cfg.categories); ++c) {
      const auto& truth = synth.truth.peak_times[u][std::size_t(c)];
      if (snaps.set.count(c) != Index(cfg.events_per_category)) ++r.mismatched;
      std::size_t k = 0;
      for (const auto& s : snaps.set.snapshots) {
        if (s.category != c) continue;
        const Index err = k < truth.size() ? std::abs(s.time_index - truth[k]) : 1000;
        r.within1 += err <= 1;
        r.within2 += err <= 2;
        ++r.total;
        ++k;
      }
    }
  }
  return r;
}

Outcome snapshots() {
  Outcome o;
  SynthConfig clean;
  clean.noise_std = 0.0;
  clean.spacing = 20;
  const auto a = peak_stats(clean);
  o.require(a.mismatched == 0, "noise-free snapshot count differs from 6 per category");
  o.require(a.within1 == a.total, fmt("noise-free: %g of %g peaks within 1", double(a.within1), double(a.total)));
  SynthConfig noisy;
  noisy.noise_std = 0.5 * noisy.amplitude;
  noisy.spacing = 20;
  const auto b = peak_stats(noisy);
  const double frac = double(b.within2) / double(b.total);
  o.require(b.mismatched == 0, "noisy snapshot count differs from 6 per category");
  o.require(frac >= 0.9, fmt("noisy: %.3f of peaks within 2", frac));
  if (o.ok) o.detail = fmt("noise-free %g/%g within 1, noisy %.3f within 2", double(a.within1), double(a.total), frac);
  return o;
}

Outcome registration() {
  Outcome o;
  const Dims d{32, 32, 32};
  const auto reference = phantom_volume(d, 11);
  const Eigen::Vector3i shift(3, -2, 1);
  const auto moving = shift_volume(reference, shift);
  RegistrationConfig cfg;
  cfg.mode = RegistrationConfig::Mode::Search;
  cfg.translation_range = 4;
  const auto found = find_transform(moving, reference, cfg);
  for (int a = 0; a < 3; ++a)
    o.require(std::abs(found.translation[a] - shift[a]) <= 1.0, fmt("axis %g recovered %g", a, found.translation[a]));
  const double self = nmi(reference, reference, cfg.histogram_bins);
  o.require(std::abs(self - 2.0) <= 1e-9, fmt("self NMI %.12g", self));
  const double best = nmi(apply_transform(moving.data(), found), reference.data(), cfg.histogram_bins);
  for (int dx = -4; dx <= 4; ++dx)
    for (int dy = -4; dy <= 4; ++dy)
      for (int dz = -4; dz <= 4; ++dz) {
        const auto t = AffineTransform::scale_shift(d, d, 1.0, Eigen::Vector3d(dx, dy, dz));
        o.require(nmi(apply_transform(moving.data(), t), reference.data(), cfg.histogram_bins) <= best,
                  "rescan found a better grid point");
      }
  if (o.ok)
    o.detail = fmt("found (%g, %g, %g)", found.translation[0], found.translation[1], found.translation[2]);
  return o;
}

Outcome features() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  std::bernoulli_distribution silent(0.3), zero_voxel(0.1);
  std::uniform_int_distribution<std::uint32_t> extent(2, 7);
  std::uniform_int_distribution<int> label(0, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 100 && o.ok; ++trial) {
    const Dims d{extent(rng), extent(rng), extent(rng)};
    Eigen::VectorXd labels(d.size()), psi(d.size()), beta(d.size());
    for (Index i = 0; i < d.size(); ++i) labels[i] = label(rng);
    const auto atlas = atlas_from_labels(Volume3D(d, labels));
    std::vector<bool> mute(std::size_t(atlas.region_count()) + 1);
    for (auto&& s : mute) s = silent(rng);
    for (Index i = 0; i < d.size(); ++i) {
      psi[i] = n(rng);
      const int l = int(labels[i]);
      beta[i] = (l > 0 && mute[std::size_t(l)]) || zero_voxel(rng) ? 0.0 : n(rng);
    }
    const auto w = weight_snapshot(psi, beta);
    for (Index i = 0; i < d.size(); ++i)
      if (beta[i] == 0.0) o.require(w.theta[i] == 0.0, "zero regressor produced a nonzero value");
    const auto slices = segment(w.theta, atlas);
    Eigen::VectorXd gathered = Eigen::VectorXd::Zero(d.size());
    for (const auto& s : slices) {
      const auto& idx = atlas.region(s.region_id);
      for (std::size_t k = 0; k < idx.size(); ++k) gathered[idx[k]] = s.values[Index(k)];
    }
    for (Index i = 0; i < d.size(); ++i)
      if (labels[i] != 0) o.require(gathered[i] == w.theta[i], "scatter-gather lost a voxel");
    std::vector<int> brute;
    for (int l = 1; l <= atlas.region_count(); ++l) {
      bool any = false;
      for (Index i = 0; i < d.size(); ++i) any = any || (labels[i] == l && w.theta[i] != 0.0);
      if (any) brute.push_back(l);
    }
    const auto active = detect_active(slices);
    o.require(active.regions == brute, "active set differs from brute force");
    const auto layout = FeatureLayout::from_atlas(atlas);
    const Eigen::VectorXd row = layout.scatter(smooth_regions(slices, active));
    for (const auto& e : layout.entries) {
      const auto& s = slices[std::size_t(e.region_id - 1)];
      const auto seg = row.segment(e.start, e.length);
      if (std::find(brute.begin(), brute.end(), e.region_id) == brute.end()) {
        o.require(seg.isZero(0.0), "silent region has nonzero features");
        continue;
      }
      Eigen::VectorXd expected = s.values;
      if (s.size() > 1) {
        const double sigma = 1.0 / (5.0 * std::log(double(s.size())));
        const int r = 2 * int(std::ceil(sigma));
        Eigen::VectorXd k(2 * r + 1);
        for (int g = -r; g <= r; ++g) k[g + r] = std::exp(-double(g * g) / (2.0 * sigma));
        expected = oracle::convolve_same(s.values, k / k.sum());
      }
      worst = std::max(worst, (seg - expected).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst <= 1e-12, fmt("region smoothing differs by %.3g", worst));
  if (o.ok) o.detail = fmt("100 instances, smoothing max-abs %.2g", worst);
  return o;
}

Outcome svm() {
  Outcome o;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  auto toy = [&](Index rows, Index dims, double sep, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(rows, dims);
    y.clear();
    for (Index r = 0; r < rows; ++r) {
      y.push_back(r % 2 ? 1 : -1);
      for (Index k = 0; k < dims; ++k) x(r, k) = n(rng) + (k == 0 ? sep * y.back() : 0.0);
    }
  };
  const struct {
    Index rows, dims;
    double c, sep, step;
  } cases[] = {{10, 1, 1.0, 1.0, 0.001}, {12, 2, 0.5, 1.5, 0.01}, {9, 3, 2.0, 0.7, 0.04}};
  double gap = -1e300;
  for (const auto& tc : cases) {
    Eigen::MatrixXd x;
    std::vector<int> y;
    toy(tc.rows, tc.dims, tc.sep, x, y);
    const auto sol = solve_l1svm(x, y, tc.c);
    const double grid = oracle::grid_minimum(x, y, tc.c, 3.0, tc.step);
    gap = std::max(gap, sol.objective - grid);
    o.require(sol.objective <= grid + 1e-3, fmt("objective %.6g above grid minimum %.6g", sol.objective, grid));
  }
  std::uniform_int_distribution<int> rows(4, 40), dims(1, 25);
  double flip_worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    Eigen::MatrixXd x;
    std::vector<int> y;
    toy(rows(rng), dims(rng), 0.8, x, y);
    SvmOptions opt;
    opt.record_trace = true;
    const double c = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 1.0 : 10.0);
    const auto sol = solve_l1svm(x, y, c, opt);
    for (std::size_t k = 1; k < sol.trace.size(); ++k)
      o.require(sol.trace[k] <= sol.trace[k - 1] + 1e-12, "objective increased between pivots");
    std::vector<int> flipped;
    for (int v : y) flipped.push_back(-v);
    const auto f = solve_l1svm(x, flipped, c);
    flip_worst = std::max(flip_worst, (f.weights + sol.weights).cwiseAbs().maxCoeff());
  }
  o.require(flip_worst <= 1e-6, fmt("label flip off by %.3g", flip_worst));
  if (o.ok) o.detail = fmt("worst gap to grid %.2g, flip %.2g", gap, flip_worst);
  return o;
}

Outcome auc_oracle() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::normal_distribution<double> fine;
  std::bernoulli_distribution coin;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(60);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
      s[std::size_t(i)] = trial % 2 ? double(coarse(rng)) : fine(rng);
      y[std::size_t(i)] = coin(rng) ? 1 : -1;
    }
    y[0] = 1;
    y[1] = -1;
    worst = std::max(worst, std::abs(auc(s, y) - oracle::pairwise_auc(s, y)));
  }
  o.require(worst <= 1e-12, fmt("max difference %.3g", worst));
  if (o.ok) o.detail = fmt("50 sets, max difference %.2g", worst);
  return o;
}

// Default synthetic experiment, shared by the benchmark and the correlation check.
struct Benchmark {
  EvalReport real, shuffled;
  double voxel_off = 0.0, feature_off = 0.0;
};

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    Benchmark r;
    const auto synth = generate(SynthConfig{});
    const auto& exp = synth.experiment;
    const auto layout = FeatureLayout::from_atlas(exp.atlas);
    std::vector<SubjectFeatures> subjects;
    std::vector<SubjectSnapshots> raw(exp.subjects.size());
    for (std::size_t u = 0; u < exp.subjects.size(); ++u)
      subjects.push_back(process_subject(exp.subjects[u], exp.atlas, layout, exp.reference, exp.params, &raw[u]));
    const auto table = make_feature_table(subjects, layout);
    LooOptions opt;
    r.real = loo_evaluate(table, "cat0", opt);
    PipelineConfig cfg;
    cfg.shuffle_labels = true;
    opt.shuffle_seed = cfg.shuffle_seed();
    r.shuffled = loo_evaluate(table, "cat0", opt);

    Index rows = 0;
    for (const auto& s : raw) rows += s.set.q();
    Eigen::MatrixXd images(rows, exp.atlas.labels().size());
    std::vector<std::string> cats;
    Index k = 0;
    for (const auto& s : raw)
      for (const auto& sn : s.set.snapshots) {
        images.row(k++) = sn.image.transpose();
        cats.push_back(s.set.category_names[std::size_t(sn.category)]);
      }
    const auto corr = correlation_matrices(table.values, table.categories, images, cats, exp.categories);
    r.voxel_off = CorrelationResult::mean_abs_off_diagonal(corr.voxel, corr.voxel_undefined);
    r.feature_off = CorrelationResult::mean_abs_off_diagonal(corr.feature, corr.feature_undefined);
    return r;
  }();
  return b;
}

Outcome end_to_end() {
  Outcome o;
  const auto& b = benchmark();
  o.require(b.real.completed_folds == 8, "not every fold completed");
  o.require(b.real.acc >= 0.95, fmt("ACC %.4f < 0.95", b.real.acc));
  o.require(b.real.auc >= 0.95, fmt("AUC %.4f < 0.95", b.real.auc));
  o.require(b.shuffled.acc >= 0.35 && b.shuffled.acc <= 0.65, fmt("shuffled ACC %.4f outside [0.35, 0.65]", b.shuffled.acc));
  if (o.ok) o.detail = fmt("ACC %.4f, AUC %.4f, shuffled ACC %.4f", b.real.acc, b.real.auc, b.shuffled.acc);
  return o;
}

Outcome correlation() {
  Outcome o;
  const auto& b = benchmark();
  o.require(std::isfinite(b.voxel_off) && std::isfinite(b.feature_off), "undefined correlation");
  o.require(b.feature_off < b.voxel_off, fmt("feature %.4f not below voxel %.4f", b.feature_off, b.voxel_off));
  if (o.ok) o.detail = fmt("feature %.4f < voxel %.4f", b.feature_off, b.voxel_off);
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto root = fs::temp_directory_path() / ("mrnr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    PipelineConfig cfg;
    cfg.out = root / run;
    run_stage("pipeline", cfg, log);
  }
  std::vector<fs::path> files{"evaluate/report.json", "evaluate/report.txt", "evaluate/scores.csv", "train/model.csv"};
  for (const auto& e : fs::directory_iterator(root / "a" / "evaluate" / "models"))
    files.push_back(fs::path("evaluate/models") / e.path().filename());
  for (const auto& f : files) {
    o.require(fs::exists(root / "b" / f), f.string() + " missing in second run");
    if (o.ok) o.require(read_file(root / "a" / f) == read_file(root / "b" / f), f.string() + " differs");
  }
  if (o.ok) o.detail = std::to_string(files.size()) + " files byte-identical";
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  const struct {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  } criteria[] = {
      {1, "GLS oracle equivalence", 5.0, gls},
      {2, "kernel correctness", 0.0, kernels},
      {3, "snapshot recovery", 10.0, snapshots},
      {4, "registration recovery", 30.0, registration},
      {5, "feature-stage oracles", 0.0, features},
      {6, "L1-SVM optimality", 0.0, svm},
      {7, "AUC oracle", 0.0, auc_oracle},
      {8, "end-to-end synthetic benchmark", 120.0, end_to_end},
      {9, "correlation structure", 0.0, correlation},
      {10, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs > c.limit_s) {
      if (o.ok) o.detail = fmt("took %.2f s, limit %.0f s", secs, c.limit_s);
      o.ok = false;
    }
    failed += !o.ok;
    std::printf("%s %2d %-32s %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}

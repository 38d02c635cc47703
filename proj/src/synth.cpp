#include "mrnr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mrnr/errors.hpp"
#include "mrnr/glm.hpp"

namespace mrnr {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

// Stream ids for derive_seed; subjects use kSubjectStream + u.
constexpr std::uint64_t kAtlasStream = 1;
constexpr std::uint64_t kLayoutStream = 2;
constexpr std::uint64_t kBaselineStream = 3;
constexpr std::uint64_t kSubjectStream = 100;

// Uniform index in [0, n) without relying on a library distribution.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) { return std::size_t(rng() % n); }

// Box-Muller on raw 53-bit uniforms so the stream is identical across standard libraries.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (double(rng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = double(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Voronoi parcellation of an ellipsoidal brain mask.
Volume3D make_atlas_labels(const SynthConfig& cfg) {
  const Dims d = cfg.dims;
  std::vector<Index> mask;
  const Eigen::Vector3d center(0.5 * (d.nx - 1), 0.5 * (d.ny - 1), 0.5 * (d.nz - 1));
  const Eigen::Vector3d semi(0.48 * d.nx, 0.48 * d.ny, 0.48 * d.nz);
  for (Index i = 0; i < d.size(); ++i) {
    const Eigen::Vector3d p = d.coords(i).cast<double>().matrix();
    if (((p - center).array() / semi.array()).square().sum() <= 1.0) mask.push_back(i);
  }
  if (Index(mask.size()) < cfg.regions)
    throw ConfigError("brain mask of " + std::to_string(mask.size()) + " voxels cannot hold " +
                      std::to_string(cfg.regions) + " regions");

  std::mt19937_64 rng(derive_seed(cfg.seed, kAtlasStream));
  std::vector<Index> pool = mask;
  std::vector<Eigen::Vector3d> seeds;
  for (int r = 0; r < cfg.regions; ++r) {
    const std::size_t k = draw_index(rng, pool.size());
    seeds.push_back(d.coords(pool[k]).cast<double>().matrix());
    pool.erase(pool.begin() + std::ptrdiff_t(k));
  }

  Eigen::VectorXd labels = Eigen::VectorXd::Zero(d.size());
  for (Index i : mask) {
    const Eigen::Vector3d p = d.coords(i).cast<double>().matrix();
    int best = 0;
    for (int r = 1; r < cfg.regions; ++r)
      if ((p - seeds[std::size_t(r)]).squaredNorm() < (p - seeds[std::size_t(best)]).squaredNorm()) best = r;
    labels[i] = best + 1;
  }
  return Volume3D(d, std::move(labels), Eigen::Vector3d::Ones(), DType::Int32);
}

OnsetSchedule make_schedule(const SynthConfig& cfg, std::mt19937_64& rng) {
  const auto names = cfg.category_names();
  // balanced event order, shuffled per subject
  std::vector<int> order;
  for (int c = 0; c < cfg.categories; ++c) order.insert(order.end(), std::size_t(cfg.events_per_category), c);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[draw_index(rng, i)]);

  OnsetSchedule s;
  for (const auto& n : names) s.categories.push_back({n, {}, {}});
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& cat = s.categories[std::size_t(order[k])];
    cat.onsets.push_back(cfg.lead_in + Index(k) * cfg.spacing);
    cat.durations.push_back(cfg.event_duration());
  }
  return s;
}

Index series_length(const SynthConfig& cfg, Index hrf_samples) {
  const Index events = Index(cfg.categories) * cfg.events_per_category;
  return cfg.lead_in + (events - 1) * cfg.spacing + cfg.event_duration() + hrf_samples;
}

}  // namespace

std::vector<std::string> SynthConfig::category_names() const {
  std::vector<std::string> names;
  for (int c = 0; c < categories; ++c) names.push_back("cat" + std::to_string(c));
  return names;
}

void SynthConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(subjects >= 1, "synth.subjects must be >= 1");
  require(categories >= 1, "synth.categories must be >= 1");
  require(events_per_category >= 1, "synth.events_per_category must be >= 1");
  require(tr_seconds > 0.0, "synth.tr must be > 0");
  require(dims.size() > 0, "synth.dims must be positive");
  require(regions >= 1, "synth.regions must be >= 1");
  require(informative_regions >= 0 && Index(informative_regions) * categories <= regions,
          "synth.informative_regions x categories exceeds synth.regions");
  require(std::isfinite(amplitude), "synth.amplitude must be finite");
  require(noise_std >= 0.0 && std::isfinite(noise_std), "synth.noise_std must be >= 0");
  require(ar1_rho > -1.0 && ar1_rho < 1.0, "synth.ar1_rho must lie in (-1, 1)");
  require(block_duration >= 1, "synth.block_duration must be >= 1");
  require(lead_in >= 0, "synth.lead_in must be >= 0");
  require(baseline_std >= 0.0, "synth.baseline_std must be >= 0");
  require(spacing > event_duration(),
          "infeasible event packing: synth.spacing must exceed the event duration " + std::to_string(event_duration()));
  if (t > 0) {
    const Index events = Index(categories) * events_per_category;
    const Index needed = lead_in + (events - 1) * spacing + event_duration();
    require(needed <= t, "infeasible event packing: " + std::to_string(events) + " events at spacing " +
                             std::to_string(spacing) + " need " + std::to_string(needed) + " samples, t = " +
                             std::to_string(t));
  }
}

SynthExperiment generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthExperiment out;
  auto& exp = out.experiment;
  auto& truth = out.truth;
  const auto names = cfg.category_names();
  const Index m = cfg.dims.size();
  const Index p = cfg.categories;

  exp.categories = names;
  exp.atlas = atlas_from_labels(make_atlas_labels(cfg));

  std::mt19937_64 layout_rng(derive_seed(cfg.seed, kLayoutStream));
  std::vector<int> region_ids(std::size_t(cfg.regions));
  std::iota(region_ids.begin(), region_ids.end(), 1);
  for (std::size_t i = region_ids.size(); i > 1; --i) std::swap(region_ids[i - 1], region_ids[draw_index(layout_rng, i)]);
  truth.betas.setZero(m, p);
  for (Index c = 0; c < p; ++c) {
    std::vector<int> regs(region_ids.begin() + c * cfg.informative_regions,
                          region_ids.begin() + (c + 1) * cfg.informative_regions);
    std::sort(regs.begin(), regs.end());
    for (int r : regs)
      for (Index v : exp.atlas.region(r)) truth.betas(v, c) = cfg.amplitude;
    truth.informative.push_back(std::move(regs));
  }
  exp.reference = Volume3D(cfg.dims, truth.betas.rowwise().mean());
  truth.native_shift = cfg.native_shift;

  const double hrf_length = 32.0;
  const auto hrf = canonical_hrf(cfg.tr_seconds, hrf_length, exp.params.hrf);
  exp.params.hrf_length_seconds = hrf_length;
  const Index t = cfg.t > 0 ? cfg.t : series_length(cfg, hrf.samples.size());

  // one event's noise-free response fixes where its peak should be found
  {
    OnsetSchedule single;
    single.categories.push_back({"probe", {0}, {cfg.event_duration()}});
    const Eigen::VectorXd r = build_design(single, hrf, cfg.event_duration() + hrf.samples.size()).columns.col(0);
    r.maxCoeff(&truth.hrf_peak_offset);
  }

  // native-space maps and baseline; the baseline is anatomy-like and shared across subjects
  Eigen::MatrixXd native_betas(m, p);
  for (Index c = 0; c < p; ++c)
    native_betas.col(c) = shift_volume(Volume3D(cfg.dims, truth.betas.col(c)), cfg.native_shift).data();
  Gaussian baseline_noise(derive_seed(cfg.seed, kBaselineStream));
  Eigen::VectorXd baseline(m);
  const auto& labels = exp.atlas.labels();
  for (Index v = 0; v < m; ++v) baseline[v] = labels[v] > 0 ? cfg.baseline_mean + cfg.baseline_std * baseline_noise() : 0.0;
  baseline = shift_volume(Volume3D(cfg.dims, baseline), cfg.native_shift).data();
  truth.baseline = baseline;

  const double innovation = cfg.noise_std * std::sqrt(1.0 - cfg.ar1_rho * cfg.ar1_rho);
  for (int u = 0; u < cfg.subjects; ++u) {
    Gaussian noise(derive_seed(cfg.seed, kSubjectStream + std::uint64_t(u)));
    SubjectData s;
    s.schedule = make_schedule(cfg, noise.engine());
    const auto design = build_design(s.schedule, hrf, t);

    s.bold.tr_seconds = cfg.tr_seconds;
    char id[32];
    std::snprintf(id, sizeof id, "sub-%02d", u + 1);
    s.bold.subject_id = id;
    s.bold.dims = cfg.dims;
    s.bold.samples = design.columns * native_betas.transpose();
    s.bold.samples.rowwise() += baseline.transpose();
    if (cfg.noise_std > 0.0) {
      Eigen::RowVectorXd e(m);
      for (Index v = 0; v < m; ++v) e[v] = cfg.noise_std * noise();
      s.bold.samples.row(0) += e;
      for (Index j = 1; j < t; ++j) {
        for (Index v = 0; v < m; ++v) e[v] = cfg.ar1_rho * e[v] + innovation * noise();
        s.bold.samples.row(j) += e;
      }
    }

    std::vector<std::vector<Index>> peaks;
    for (const auto& cat : s.schedule.categories) {
      std::vector<Index> pk;
      for (Index onset : cat.onsets) pk.push_back(onset + truth.hrf_peak_offset);
      peaks.push_back(std::move(pk));
    }
    truth.peak_times.push_back(std::move(peaks));
    exp.subjects.push_back(std::move(s));
  }
  return out;
}

Volume3D shift_volume(const Volume3D& v, const Eigen::Vector3i& shift) {
  const Dims d = v.dims();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d.size());
  for (Index z = 0; z < Index(d.nz); ++z)
    for (Index y = 0; y < Index(d.ny); ++y)
      for (Index x = 0; x < Index(d.nx); ++x) {
        const Index sx = x - shift.x(), sy = y - shift.y(), sz = z - shift.z();
        if (d.contains(sx, sy, sz)) out[d.index(x, y, z)] = v(sx, sy, sz);
      }
  return Volume3D(d, std::move(out), v.voxel_size(), v.dtype());
}

Volume3D phantom_volume(Dims dims, std::uint64_t seed, int blobs) {
  Gaussian g(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * double(g.engine()() >> 11) * 0x1.0p-53; };
  const Eigen::Vector3d extent(dims.nx, dims.ny, dims.nz);
  Eigen::VectorXd data = Eigen::VectorXd::Zero(dims.size());
  for (int b = 0; b < blobs; ++b) {
    Eigen::Vector3d c, w;
    for (int a = 0; a < 3; ++a) {
      c[a] = uniform(0.25, 0.75) * extent[a];
      w[a] = uniform(0.06, 0.18) * extent[a];
    }
    const double amp = uniform(0.5, 2.0);
    for (Index i = 0; i < dims.size(); ++i) {
      const Eigen::Vector3d p = dims.coords(i).cast<double>().matrix();
      data[i] += amp * std::exp(-0.5 * ((p - c).array() / w.array()).square().sum());
    }
  }
  return Volume3D(dims, std::move(data));
}

}  // namespace mrnr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/pipeline.hpp"
#include "mrnr/volume.hpp"

namespace mrnr {

/// Generator settings for a synthetic block- or event-design experiment.
struct SynthConfig {
  enum class Design { Block, Event };

  std::uint64_t seed = 42;
  int subjects = 8;
  int categories = 2;
  int events_per_category = 6;
  Index t = 0;  // 0 picks the shortest series that fits every event plus the HRF tail
  double tr_seconds = 1.0;
  Dims dims{12, 12, 12};
  int regions = 20;
  int informative_regions = 3;  // per category, disjoint across categories
  double amplitude = 1.0;
  double noise_std = 0.5;
  double ar1_rho = 0.0;  // temporal correlation of the noise; stationary std stays noise_std
  Design design = Design::Block;
  Index block_duration = 10;  // samples; event designs use 1
  Index spacing = 30;         // onset-to-onset samples between consecutive events
  Index lead_in = 4;
  double baseline_mean = 10.0;
  double baseline_std = 2.0;
  Eigen::Vector3i native_shift = Eigen::Vector3i::Zero();  // native content sits at standard + shift

  Index event_duration() const { return design == Design::Block ? block_duration : 1; }
  std::vector<std::string> category_names() const;

  /// Throws ConfigError on unusable values or when the events cannot be packed into `t`.
  void validate() const;
};

/// Everything the generator knows that the pipeline must not see.
struct SynthTruth {
  Eigen::MatrixXd betas;  // standard-space m x p activation amplitudes
  std::vector<std::vector<int>> informative;  // per category, region ids
  std::vector<std::vector<std::vector<Index>>> peak_times;  // [subject][category][event]
  Eigen::VectorXd baseline;  // native-space constant added to every frame
  Eigen::Vector3i native_shift = Eigen::Vector3i::Zero();
  Index hrf_peak_offset = 0;  // argmax of one event's noise-free response, relative to its onset
};

struct SynthExperiment {
  Experiment experiment;
  SynthTruth truth;
};

SynthExperiment generate(const SynthConfig& cfg);

/// Integer-voxel shift with zero fill: out(x) = v(x - shift).
Volume3D shift_volume(const Volume3D& v, const Eigen::Vector3i& shift);

/// Sum of a few anisotropic Gaussian blobs at seeded positions, for registration tests.
Volume3D phantom_volume(Dims dims, std::uint64_t seed, int blobs = 6);

/// splitmix64 step used to derive independent stream seeds from one seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mrnr

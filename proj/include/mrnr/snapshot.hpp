#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/glm.hpp"
#include "mrnr/kernel.hpp"
#include "mrnr/volume.hpp"

namespace mrnr {

/// Design columns after Gaussian smoothing; same shape as the source design.
struct SmoothedDesign {
  Eigen::MatrixXd columns;
  std::vector<std::string> names;
};

SmoothedDesign smooth_design(const DesignMatrix& d, const GaussianKernel1D& g);

/// Local maxima of `phi`: phi[j-1] < phi[j] >= phi[j+1], endpoints excluded,
/// so a plateau reports its first index.
///
/// When `onsets` is non-empty each event keeps only its dominant maximum:
/// candidates are grouped into windows [onset_k, onset_{k+1}) and the largest
/// (earliest on ties) is kept; candidates before the first onset are dropped.
/// With no onsets every local maximum is returned. Result is ascending.
std::vector<Index> find_peaks(const Eigen::Ref<const Eigen::VectorXd>& phi, std::span<const Index> onsets = {});

struct Snapshot {
  Index category = 0;
  Index time_index = 0;
  Eigen::VectorXd image;  // raw row of the series at time_index
};

/// Snapshots ordered by category then time.
struct SnapshotSet {
  std::vector<Snapshot> snapshots;
  std::vector<std::string> category_names;

  Index q() const { return Index(snapshots.size()); }
  Index count(Index category) const;
};

/// One snapshot per detected peak of each smoothed design column.
/// Throws DataError("no stimuli detected") when no category yields a peak.
SnapshotSet extract_snapshots(const BoldSeries& f, const SmoothedDesign& sm, const OnsetSchedule& schedule);

}  // namespace mrnr

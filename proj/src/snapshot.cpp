#include "mrnr/snapshot.hpp"

#include <algorithm>

#include "mrnr/errors.hpp"

namespace mrnr {

SmoothedDesign smooth_design(const DesignMatrix& d, const GaussianKernel1D& g) {
  SmoothedDesign out;
  out.names = d.names;
  out.columns.resize(d.t(), d.p());
  for (Index c = 0; c < d.p(); ++c) out.columns.col(c) = convolve_same(d.columns.col(c), g);
  return out;
}

std::vector<Index> find_peaks(const Eigen::Ref<const Eigen::VectorXd>& phi, std::span<const Index> onsets) {
  const Index t = phi.size();
  std::vector<Index> candidates;
  for (Index j = 1; j + 1 < t; ++j)
    if (phi[j - 1] < phi[j] && phi[j] >= phi[j + 1]) candidates.push_back(j);
  if (onsets.empty()) return candidates;

  std::vector<Index> sorted(onsets.begin(), onsets.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Index> kept;
  auto c = candidates.begin();
  for (std::size_t e = 0; e < sorted.size(); ++e) {
    const Index lo = sorted[e];
    const Index hi = e + 1 < sorted.size() ? sorted[e + 1] : t;
    while (c != candidates.end() && *c < lo) ++c;
    Index best = -1;
    for (; c != candidates.end() && *c < hi; ++c)
      if (best < 0 || phi[*c] > phi[best]) best = *c;
    if (best >= 0) kept.push_back(best);
  }
  return kept;
}

Index SnapshotSet::count(Index category) const {
  return Index(std::count_if(snapshots.begin(), snapshots.end(),
                             [&](const Snapshot& s) { return s.category == category; }));
}

SnapshotSet extract_snapshots(const BoldSeries& f, const SmoothedDesign& sm, const OnsetSchedule& schedule) {
  f.validate();
  if (sm.columns.rows() != f.t())
    throw ArgumentError("smoothed design has " + std::to_string(sm.columns.rows()) + " rows, series has " +
                        std::to_string(f.t()));
  if (sm.columns.cols() != schedule.category_count())
    throw ArgumentError("smoothed design and schedule disagree on the number of categories");
  SnapshotSet out;
  out.category_names = schedule.names();
  for (Index c = 0; c < sm.columns.cols(); ++c) {
    const auto peaks = find_peaks(sm.columns.col(c), schedule.categories[std::size_t(c)].onsets);
    for (Index j : peaks) {
      if (j < 0 || j >= f.t()) throw ArgumentError("peak index " + std::to_string(j) + " outside the series");
      out.snapshots.push_back({c, j, f.samples.row(j).transpose()});
    }
  }
  if (out.snapshots.empty()) throw DataError("no stimuli detected in subject " + f.subject_id);
  return out;
}

}  // namespace mrnr

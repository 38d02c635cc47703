#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/kernel.hpp"
#include "mrnr/volume.hpp"

namespace mrnr {

/// Standard-space snapshot masked by its category's regressor map.
struct WeightedSnapshot {
  Eigen::VectorXd theta;
  Index category = 0;
  std::string snapshot_id;
};

/// Elementwise product; zeros of `beta_star` stay zero.
WeightedSnapshot weight_snapshot(const Eigen::Ref<const Eigen::VectorXd>& psi,
                                 const Eigen::Ref<const Eigen::VectorXd>& beta_star);

struct RegionSlice {
  int region_id = 0;
  Eigen::VectorXd values;  // ascending linear-index order within the region

  Index size() const { return values.size(); }
};

/// One slice per atlas region 1..L; background voxels are dropped.
std::vector<RegionSlice> segment(const Eigen::Ref<const Eigen::VectorXd>& theta, const Atlas& atlas);

struct ActiveRegionSet {
  std::vector<int> regions;  // ascending

  bool empty() const { return regions.empty(); }
  int first() const { return regions.front(); }
  int last() const { return regions.back(); }
};

/// Regions whose absolute sum is exactly non-zero.
ActiveRegionSet detect_active(const std::vector<RegionSlice>& slices);

/// 1 / (5 ln N), the size-dependent region smoothing width.
double region_sigma(Index n_voxels);

/// Region kernel exp(-v^2 / (2 sigma)) over [-2 ceil(sigma), 2 ceil(sigma)],
/// normalized. Regions with N <= 1 have no defined width and return nullopt;
/// callers pass their values through unchanged.
std::optional<GaussianKernel1D> region_kernel(Index n_voxels);

/// Concatenated smoothed slices of the active regions, ascending region order.
struct FeatureVector {
  std::vector<int> regions;
  std::vector<Index> offsets;
  Eigen::VectorXd values;
};

FeatureVector smooth_regions(const std::vector<RegionSlice>& slices, const ActiveRegionSet& active);

/// Fixed placement of every non-empty atlas region in a classifier row.
struct FeatureLayout {
  struct Entry {
    int region_id = 0;
    Index start = 0;
    Index length = 0;
  };
  std::vector<Entry> entries;

  static FeatureLayout from_atlas(const Atlas& atlas);

  Index total() const { return entries.empty() ? 0 : entries.back().start + entries.back().length; }
  const Entry& find(int region_id) const;

  /// Zero-filled row; regions absent from `fv` stay zero.
  Eigen::VectorXd scatter(const FeatureVector& fv) const;

  friend bool operator==(const FeatureLayout& a, const FeatureLayout& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i)
      if (a.entries[i].region_id != b.entries[i].region_id || a.entries[i].start != b.entries[i].start ||
          a.entries[i].length != b.entries[i].length)
        return false;
    return true;
  }
};

/// Snapshot rows in a shared layout, as exchanged between pipeline stages.
struct FeatureTable {
  FeatureLayout layout;
  std::vector<std::string> snapshot_ids;
  std::vector<std::string> subject_ids;
  std::vector<std::string> categories;
  Eigen::MatrixXd values;  // rows x layout.total()

  Index rows() const { return values.rows(); }
};

void write_feature_table(const FeatureTable& table, const std::filesystem::path& features,
                         const std::filesystem::path& offsets);
FeatureTable read_feature_table(const std::filesystem::path& features, const std::filesystem::path& offsets);

}  // namespace mrnr

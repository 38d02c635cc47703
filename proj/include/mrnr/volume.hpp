#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mrnr {

using Index = Eigen::Index;

/// Grid extent. Linear index of voxel (x, y, z) is x + nx * (y + ny * z).
struct Dims {
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;
  std::uint32_t nz = 0;

  Index size() const { return Index(nx) * Index(ny) * Index(nz); }

  Index index(Index x, Index y, Index z) const { return x + Index(nx) * (y + Index(ny) * z); }

  Eigen::Array3i coords(Index i) const {
    const Index plane = Index(nx) * Index(ny);
    return {int(i % nx), int((i / nx) % ny), int(i / plane)};
  }

  bool contains(Index x, Index y, Index z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < Index(nx) && y < Index(ny) && z < Index(nz);
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

/// On-disk sample type of a volume file.
enum class DType : std::uint8_t { Float64 = 1, Int32 = 2 };

/// A scalar field sampled on a regular 3D grid.
///
/// Values are held as double regardless of the storage type; `dtype` only
/// controls how the volume is serialized, so int32 label files round-trip
/// exactly.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, Eigen::VectorXd data, Eigen::Vector3d voxel_size_mm = Eigen::Vector3d::Ones(),
           DType dtype = DType::Float64);

  static Volume3D zeros(Dims dims, Eigen::Vector3d voxel_size_mm = Eigen::Vector3d::Ones());

  const Dims& dims() const { return dims_; }
  Index size() const { return data_.size(); }
  const Eigen::VectorXd& data() const { return data_; }
  const Eigen::Vector3d& voxel_size() const { return voxel_size_; }
  DType dtype() const { return dtype_; }

  double operator()(Index x, Index y, Index z) const { return data_[dims_.index(x, y, z)]; }
  double operator[](Index i) const { return data_[i]; }

  /// True when every value is finite.
  bool all_finite() const;

  friend bool operator==(const Volume3D& a, const Volume3D& b);

 private:
  Dims dims_;
  Eigen::VectorXd data_;
  Eigen::Vector3d voxel_size_ = Eigen::Vector3d::Ones();
  DType dtype_ = DType::Float64;
};

/// One subject's time-by-voxel signal matrix. Row j is the image at sample j.
struct BoldSeries {
  Eigen::MatrixXd samples;  // t x m
  double tr_seconds = 1.0;
  std::string subject_id;
  Dims dims;
  Eigen::Vector3d voxel_size_mm = Eigen::Vector3d::Ones();

  Index t() const { return samples.rows(); }
  Index m() const { return samples.cols(); }

  /// Throws ArgumentError when shape or sampling metadata is inconsistent.
  void validate() const;
};

/// Integer label volume with a precomputed voxel list per region.
///
/// Label 0 is background and never a region. Regions are numbered 1..L where
/// L is the largest label present; unused labels yield empty regions.
class Atlas {
 public:
  Atlas() = default;

  const Volume3D& labels() const { return labels_; }
  int region_count() const { return int(region_index_.size()); }

  /// Sorted linear voxel indices of region `label` (1-based).
  const std::vector<Index>& region(int label) const;

  const std::vector<std::vector<Index>>& regions() const { return region_index_; }

  friend Atlas atlas_from_labels(const Volume3D& labels);

 private:
  Volume3D labels_;
  std::vector<std::vector<Index>> region_index_;
};

/// Builds the region index; throws FormatError on negative or non-integer labels.
Atlas atlas_from_labels(const Volume3D& labels);

/// Stimulus timing for one category.
struct EventCategory {
  std::string name;
  std::vector<Index> onsets;     // sample indices, strictly increasing
  std::vector<Index> durations;  // samples, one per onset
};

struct OnsetSchedule {
  std::vector<EventCategory> categories;

  Index category_count() const { return Index(categories.size()); }

  /// Index of the category named `name`; throws LookupError when absent.
  Index category_index(const std::string& name) const;

  std::vector<std::string> names() const;

  /// Schedule with categories in the given order; missing names become empty categories.
  /// Throws LookupError when this schedule has a category not in `names`.
  OnsetSchedule reordered(const std::vector<std::string>& names) const;

  /// Throws ArgumentError when onsets are unordered or any event falls outside [0, t).
  void validate(Index t) const;
};

Volume3D read_volume(const std::filesystem::path& path);
void write_volume(const Volume3D& v, const std::filesystem::path& path);

/// Serialized bytes of `v` in the volume file format.
std::vector<char> encode_volume(const Volume3D& v);
Volume3D decode_volume(const std::vector<char>& bytes, const std::string& origin = "<memory>");

/// Event table with header `category_name,onset_sample,duration_samples`.
/// Categories keep their order of first appearance.
OnsetSchedule read_onsets(const std::filesystem::path& path);
void write_onsets(const OnsetSchedule& schedule, const std::filesystem::path& path);

/// Writes `bytes` to a sibling temporary file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace mrnr

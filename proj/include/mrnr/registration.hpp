#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mrnr/glm.hpp"
#include "mrnr/volume.hpp"

namespace mrnr {

/// Affine map from target-grid voxel coordinates to source-grid voxel
/// coordinates: source = linear * target + translation.
///
/// Resampling pulls values back through this map, so a transform with
/// translation s applied to an image whose content sits at x + s moves that
/// content to x.
struct AffineTransform {
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Dims source_dims;
  Dims target_dims;

  /// Identity on equal grids; center-aligned otherwise.
  static AffineTransform identity(Dims source, Dims target);

  /// Isotropic scale about the grid centers followed by a shift in source voxels.
  static AffineTransform scale_shift(Dims source, Dims target, double scale, const Eigen::Vector3d& shift);

  Eigen::Vector3d map(const Eigen::Vector3d& target_voxel) const { return linear * target_voxel + translation; }

  /// Throws ArgumentError when |det(linear)| <= 1e-9.
  void validate() const;

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

struct RegistrationConfig {
  enum class Mode { Identity, Search };
  Mode mode = Mode::Identity;
  int histogram_bins = 32;
  int translation_range = 4;  // +- voxels on every axis
  int translation_step = 1;
  std::vector<double> scales{1.0};
  int jobs = 1;

  void validate() const;
};

/// (H(a) + H(b)) / H(a, b) over an equal-width joint histogram; each image is
/// binned over its own [min, max]. Returns 1 when the joint entropy is zero.
double nmi(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b, int bins);
double nmi(const Volume3D& a, const Volume3D& b, int bins);

/// Trilinear resampling of a source-grid image onto the target grid. Corners
/// outside the source grid contribute 0.
Eigen::VectorXd apply_transform(const Eigen::Ref<const Eigen::VectorXd>& image, const AffineTransform& t);
Volume3D apply_transform(const Volume3D& image, const AffineTransform& t, const Eigen::Vector3d& target_voxel_mm);

struct GridCandidate {
  double scale = 1.0;
  Eigen::Vector3i shift = Eigen::Vector3i::Zero();
  AffineTransform transform;
  double score = 0.0;
};

/// Every candidate of the search grid with its NMI against the reference, in
/// lexicographic (scale, dx, dy, dz) order.
std::vector<GridCandidate> score_grid(const Volume3D& moving, const Volume3D& reference, const RegistrationConfig& cfg);

/// NMI-maximizing transform over the configured grid (first candidate wins
/// ties). Identity mode skips the search.
AffineTransform find_transform(const Volume3D& moving, const Volume3D& reference, const RegistrationConfig& cfg);

/// Transform and standard-space regressor map of a snapshot's category.
std::pair<const AffineTransform&, Eigen::VectorXd> select_transform(Index category,
                                                                    const std::vector<AffineTransform>& transforms,
                                                                    const CorrelationMap& betas);

struct TransformRecord {
  std::string subject_id;
  std::string category;
  AffineTransform transform;
};

void write_transforms(const std::vector<TransformRecord>& records, const std::filesystem::path& path);
std::vector<TransformRecord> read_transforms(const std::filesystem::path& path);

}  // namespace mrnr

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrnr/feature.hpp"
#include "mrnr/glm.hpp"
#include "mrnr/registration.hpp"
#include "mrnr/snapshot.hpp"
#include "mrnr/volume.hpp"

namespace mrnr {

/// Numerical knobs shared by every per-subject stage.
struct PipelineParams {
  double sigma_g = 1.0;
  double svm_c = 1.0;
  NoiseModel noise = NoiseModel::identity();
  bool estimate_rho = false;  // AR(1) coefficient from pooled residuals instead of `noise.rho`
  bool glm_intercept = true;  // fit a constant nuisance column alongside the stimulus columns
  bool append_bias = false;
  double hrf_length_seconds = 32.0;
  HrfParams hrf;
  RegistrationConfig registration;
  int jobs = 1;
};

struct SubjectData {
  BoldSeries bold;
  OnsetSchedule schedule;
};

/// Everything needed to run the decoding pipeline over a group of subjects.
struct Experiment {
  std::vector<SubjectData> subjects;
  std::vector<std::string> categories;
  Atlas atlas;
  Volume3D reference;
  PipelineParams params;

  void validate() const;
};

struct SubjectDesign {
  DesignMatrix design;
  CorrelationMap betas;  // native space, m x p
  double rho = 0.0;      // AR(1) coefficient actually used
};

/// Design matrix from the subject's onsets and GLS regressor maps.
SubjectDesign design_subject(const SubjectData& subject, const PipelineParams& params);

struct SubjectSnapshots {
  SmoothedDesign smoothed;
  SnapshotSet set;
};

SubjectSnapshots select_snapshots(const SubjectData& subject, const DesignMatrix& design, const PipelineParams& params);

/// Snapshot rows in the shared atlas layout with their provenance.
struct SubjectFeatures {
  std::string subject_id;
  std::vector<AffineTransform> transforms;  // one per category
  std::vector<std::string> snapshot_ids;
  std::vector<std::string> categories;
  std::vector<Index> time_indices;
  std::vector<ActiveRegionSet> active;
  Eigen::MatrixXd rows;  // q x layout.total()
};

std::string snapshot_id(const std::string& subject_id, Index k);

/// Registration, regressor weighting, segmentation and region smoothing for one subject.
/// `native_dims` and `native_voxel_mm` describe the grid the snapshots and maps live on.
SubjectFeatures extract_subject_features(const std::string& subject_id, const Dims& native_dims,
                                         const Eigen::Vector3d& native_voxel_mm, const SnapshotSet& snapshots,
                                         const CorrelationMap& native_betas, const Atlas& atlas,
                                         const FeatureLayout& layout, const Volume3D& reference,
                                         const PipelineParams& params);

/// design_subject -> select_snapshots -> extract_subject_features.
SubjectFeatures process_subject(const SubjectData& subject, const Atlas& atlas, const FeatureLayout& layout,
                                const Volume3D& reference, const PipelineParams& params,
                                SubjectSnapshots* snapshots_out = nullptr);

/// Stacks per-subject rows into one table (subjects in the given order).
FeatureTable make_feature_table(const std::vector<SubjectFeatures>& subjects, const FeatureLayout& layout);

}  // namespace mrnr

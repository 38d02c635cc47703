#include "mrnr/pipeline.hpp"

#include <cstdio>

#include "mrnr/errors.hpp"

namespace mrnr {

void Experiment::validate() const {
  if (subjects.empty()) throw DataError("experiment has no subjects");
  if (categories.empty()) throw DataError("experiment has no categories");
  for (const auto& s : subjects) {
    s.bold.validate();
    if (s.schedule.names() != categories)
      throw DataError("subject " + s.bold.subject_id + " does not use the experiment's category vocabulary");
    s.schedule.validate(s.bold.t());
  }
  if (!(atlas.labels().dims() == reference.dims()))
    throw DataError("atlas dims " + to_string(atlas.labels().dims()) + " differ from reference dims " +
                    to_string(reference.dims()));
}

SubjectDesign design_subject(const SubjectData& subject, const PipelineParams& params) {
  const auto& bold = subject.bold;
  bold.validate();
  const auto hrf = canonical_hrf(bold.tr_seconds, params.hrf_length_seconds, params.hrf);
  SubjectDesign out;
  out.design = build_design(subject.schedule, hrf, bold.t());

  Eigen::MatrixXd regressors = out.design.columns;
  if (params.glm_intercept) {
    regressors.conservativeResize(Eigen::NoChange, regressors.cols() + 1);
    regressors.col(regressors.cols() - 1).setOnes();
  }
  NoiseModel noise = params.noise;
  if (noise.kind == NoiseModel::Kind::Ar1 && params.estimate_rho)
    noise = NoiseModel::ar1(estimate_ar1_rho(bold.samples, regressors));
  out.rho = noise.kind == NoiseModel::Kind::Ar1 ? noise.rho : 0.0;
  out.betas = estimate_regressors(bold.samples, regressors, noise);
  out.betas.maps.conservativeResize(Eigen::NoChange, out.design.p());
  return out;
}

SubjectSnapshots select_snapshots(const SubjectData& subject, const DesignMatrix& design, const PipelineParams& params) {
  SubjectSnapshots out;
  out.smoothed = smooth_design(design, gaussian_kernel(params.sigma_g));
  out.set = extract_snapshots(subject.bold, out.smoothed, subject.schedule);
  return out;
}

std::string snapshot_id(const std::string& subject_id, Index k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04ld", long(k));
  return subject_id + "_" + buf;
}

SubjectFeatures extract_subject_features(const std::string& subject_id, const Dims& native_dims,
                                         const Eigen::Vector3d& native_voxel_mm, const SnapshotSet& snapshots,
                                         const CorrelationMap& native_betas, const Atlas& atlas,
                                         const FeatureLayout& layout, const Volume3D& reference,
                                         const PipelineParams& params) {
  if (native_betas.voxels() != native_dims.size())
    throw ArgumentError("regressor maps do not match the native grid " + to_string(native_dims));
  const Index p = native_betas.p();
  SubjectFeatures out;
  out.subject_id = subject_id;

  // one transform per category, estimated from that category's regressor map
  CorrelationMap standard;
  standard.space = Space::Standard;
  standard.maps.resize(reference.size(), p);
  for (Index c = 0; c < p; ++c) {
    const Volume3D moving(native_dims, native_betas.maps.col(c), native_voxel_mm);
    out.transforms.push_back(find_transform(moving, reference, params.registration));
    standard.maps.col(c) = apply_transform(native_betas.maps.col(c), out.transforms.back());
  }

  out.rows.setZero(snapshots.q(), layout.total());
  for (Index k = 0; k < snapshots.q(); ++k) {
    const auto& snap = snapshots.snapshots[std::size_t(k)];
    const auto [transform, beta_star] = select_transform(snap.category, out.transforms, standard);
    const Eigen::VectorXd psi = apply_transform(snap.image, transform);
    const auto weighted = weight_snapshot(psi, beta_star);
    const auto slices = segment(weighted.theta, atlas);
    auto active = detect_active(slices);
    out.rows.row(k) = layout.scatter(smooth_regions(slices, active)).transpose();
    out.active.push_back(std::move(active));
    out.snapshot_ids.push_back(snapshot_id(subject_id, k));
    out.categories.push_back(snapshots.category_names[std::size_t(snap.category)]);
    out.time_indices.push_back(snap.time_index);
  }
  return out;
}

SubjectFeatures process_subject(const SubjectData& subject, const Atlas& atlas, const FeatureLayout& layout,
                                const Volume3D& reference, const PipelineParams& params,
                                SubjectSnapshots* snapshots_out) {
  const auto design = design_subject(subject, params);
  auto snaps = select_snapshots(subject, design.design, params);
  auto features = extract_subject_features(subject.bold.subject_id, subject.bold.dims, subject.bold.voxel_size_mm,
                                           snaps.set, design.betas, atlas, layout, reference, params);
  if (snapshots_out) *snapshots_out = std::move(snaps);
  return features;
}

FeatureTable make_feature_table(const std::vector<SubjectFeatures>& subjects, const FeatureLayout& layout) {
  FeatureTable table;
  table.layout = layout;
  Index total = 0;
  for (const auto& s : subjects) total += s.rows.rows();
  table.values.resize(total, layout.total());
  Index r = 0;
  for (const auto& s : subjects) {
    if (s.rows.cols() != layout.total()) throw ArgumentError("subject rows do not match the layout");
    table.values.middleRows(r, s.rows.rows()) = s.rows;
    r += s.rows.rows();
    for (std::size_t k = 0; k < s.snapshot_ids.size(); ++k) {
      table.snapshot_ids.push_back(s.snapshot_ids[k]);
      table.subject_ids.push_back(s.subject_id);
      table.categories.push_back(s.categories[k]);
    }
  }
  return table;
}

}  // namespace mrnr

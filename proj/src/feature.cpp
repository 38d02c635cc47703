#include "mrnr/feature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mrnr/errors.hpp"
#include "mrnr/text.hpp"

namespace mrnr {

WeightedSnapshot weight_snapshot(const Eigen::Ref<const Eigen::VectorXd>& psi,
                                 const Eigen::Ref<const Eigen::VectorXd>& beta_star) {
  if (psi.size() != beta_star.size())
    throw ArgumentError("snapshot length " + std::to_string(psi.size()) + " differs from regressor map length " +
                        std::to_string(beta_star.size()));
  WeightedSnapshot w;
  w.theta = psi.cwiseProduct(beta_star);
  return w;
}

std::vector<RegionSlice> segment(const Eigen::Ref<const Eigen::VectorXd>& theta, const Atlas& atlas) {
  if (theta.size() != atlas.labels().size())
    throw ArgumentError("snapshot length " + std::to_string(theta.size()) + " differs from atlas size " +
                        std::to_string(atlas.labels().size()));
  std::vector<RegionSlice> out;
  out.reserve(std::size_t(atlas.region_count()));
  for (int label = 1; label <= atlas.region_count(); ++label) {
    const auto& idx = atlas.region(label);
    RegionSlice s{label, Eigen::VectorXd(Index(idx.size()))};
    for (std::size_t k = 0; k < idx.size(); ++k) s.values[Index(k)] = theta[idx[k]];
    out.push_back(std::move(s));
  }
  return out;
}

ActiveRegionSet detect_active(const std::vector<RegionSlice>& slices) {
  ActiveRegionSet a;
  for (const auto& s : slices)
    if (s.values.cwiseAbs().sum() != 0.0) a.regions.push_back(s.region_id);
  std::sort(a.regions.begin(), a.regions.end());
  return a;
}

double region_sigma(Index n_voxels) {
  if (n_voxels <= 1) throw ArgumentError("region sigma undefined for N <= 1");
  return 1.0 / (5.0 * std::log(double(n_voxels)));
}

std::optional<GaussianKernel1D> region_kernel(Index n_voxels) {
  if (n_voxels <= 1) return std::nullopt;
  const double sigma = region_sigma(n_voxels);
  return detail::sampled_gaussian<double>(sigma, 2.0 * sigma);
}

FeatureVector smooth_regions(const std::vector<RegionSlice>& slices, const ActiveRegionSet& active) {
  FeatureVector fv;
  std::vector<Eigen::VectorXd> parts;
  Index offset = 0;
  for (int id : active.regions) {
    auto it = std::find_if(slices.begin(), slices.end(), [&](const RegionSlice& s) { return s.region_id == id; });
    if (it == slices.end()) throw LookupError("active region " + std::to_string(id) + " has no slice");
    const auto kernel = region_kernel(it->size());
    parts.push_back(kernel ? convolve_same(it->values, *kernel) : it->values);
    fv.regions.push_back(id);
    fv.offsets.push_back(offset);
    offset += it->size();
  }
  fv.values.resize(offset);
  for (std::size_t i = 0; i < parts.size(); ++i) fv.values.segment(fv.offsets[i], parts[i].size()) = parts[i];
  return fv;
}

FeatureLayout FeatureLayout::from_atlas(const Atlas& atlas) {
  FeatureLayout layout;
  Index start = 0;
  for (int label = 1; label <= atlas.region_count(); ++label) {
    const auto n = Index(atlas.region(label).size());
    if (n == 0) continue;
    layout.entries.push_back({label, start, n});
    start += n;
  }
  return layout;
}

const FeatureLayout::Entry& FeatureLayout::find(int region_id) const {
  for (const auto& e : entries)
    if (e.region_id == region_id) return e;
  throw LookupError("region " + std::to_string(region_id) + " is not in the feature layout");
}

Eigen::VectorXd FeatureLayout::scatter(const FeatureVector& fv) const {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(total());
  for (std::size_t i = 0; i < fv.regions.size(); ++i) {
    const auto& e = find(fv.regions[i]);
    const Index len = (i + 1 < fv.regions.size() ? fv.offsets[i + 1] : fv.values.size()) - fv.offsets[i];
    if (len != e.length)
      throw ArgumentError("region " + std::to_string(e.region_id) + " has " + std::to_string(len) +
                          " features, layout expects " + std::to_string(e.length));
    row.segment(e.start, e.length) = fv.values.segment(fv.offsets[i], len);
  }
  return row;
}

void write_feature_table(const FeatureTable& table, const std::filesystem::path& features,
                         const std::filesystem::path& offsets) {
  if (table.values.cols() != table.layout.total())
    throw ArgumentError("feature matrix width differs from layout total");
  std::ostringstream off;
  off << "region_id,start,length\n";
  for (const auto& e : table.layout.entries) off << e.region_id << ',' << e.start << ',' << e.length << '\n';

  std::ostringstream out;
  out << "snapshot_id,subject_id,category";
  for (Index k = 0; k < table.values.cols(); ++k) out << ",f" << k;
  out << '\n';
  for (Index r = 0; r < table.rows(); ++r) {
    out << table.snapshot_ids[std::size_t(r)] << ',' << table.subject_ids[std::size_t(r)] << ','
        << table.categories[std::size_t(r)];
    for (Index k = 0; k < table.values.cols(); ++k) out << ',' << format_double(table.values(r, k));
    out << '\n';
  }
  write_file_atomic(offsets, off.str());
  write_file_atomic(features, out.str());
}

FeatureTable read_feature_table(const std::filesystem::path& features, const std::filesystem::path& offsets) {
  FeatureTable table;
  const auto off = read_lines(read_file(offsets));
  if (off.empty() || off.front() != "region_id,start,length")
    throw FormatError(offsets.string() + ": header must be 'region_id,start,length'");
  Index expected_start = 0;
  for (std::size_t n = 1; n < off.size(); ++n) {
    const auto f = split_fields(off[n]);
    const std::string where = offsets.string() + ":" + std::to_string(n + 1);
    if (f.size() != 3) throw FormatError(where + ": expected 3 fields");
    FeatureLayout::Entry e{int(parse_int(f[0], where)), Index(parse_int(f[1], where)), Index(parse_int(f[2], where))};
    if (e.start != expected_start || e.length < 1) throw FormatError(where + ": offsets are not contiguous");
    expected_start += e.length;
    table.layout.entries.push_back(e);
  }

  const auto lines = read_lines(read_file(features));
  if (lines.empty() || !lines.front().starts_with("snapshot_id,subject_id,category"))
    throw FormatError(features.string() + ": missing feature header");
  const Index width = table.layout.total();
  table.values.resize(Index(lines.size()) - 1, width);
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto f = split_fields(lines[n]);
    const std::string where = features.string() + ":" + std::to_string(n + 1);
    if (Index(f.size()) != 3 + width)
      throw FormatError(where + ": expected " + std::to_string(3 + width) + " fields, got " + std::to_string(f.size()));
    table.snapshot_ids.push_back(f[0]);
    table.subject_ids.push_back(f[1]);
    table.categories.push_back(f[2]);
    for (Index k = 0; k < width; ++k) table.values(Index(n) - 1, k) = parse_double(f[std::size_t(3 + k)], where);
  }
  return table;
}

}  // namespace mrnr

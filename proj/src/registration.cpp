#include "mrnr/registration.hpp"

#include <Eigen/LU>

#include <cmath>
#include <sstream>

#include "mrnr/errors.hpp"
#include "mrnr/parallel.hpp"
#include "mrnr/text.hpp"

namespace mrnr {

namespace {

Eigen::Vector3d center(const Dims& d) {
  return {0.5 * (double(d.nx) - 1.0), 0.5 * (double(d.ny) - 1.0), 0.5 * (double(d.nz) - 1.0)};
}

std::vector<int> bin_indices(const Eigen::Ref<const Eigen::VectorXd>& v, int bins) {
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  std::vector<int> out(std::size_t(v.size()), 0);
  if (!(hi > lo)) return out;
  const double scale = double(bins) / (hi - lo);
  for (Index i = 0; i < v.size(); ++i) out[std::size_t(i)] = std::min(bins - 1, int((v[i] - lo) * scale));
  return out;
}

double entropy(const Eigen::Ref<const Eigen::ArrayXd>& counts, double total) {
  double h = 0.0;
  for (Index i = 0; i < counts.size(); ++i)
    if (counts[i] > 0.0) {
      const double p = counts[i] / total;
      h -= p * std::log(p);
    }
  return h;
}

}  // namespace

AffineTransform AffineTransform::identity(Dims source, Dims target) {
  AffineTransform t;
  t.source_dims = source;
  t.target_dims = target;
  t.translation = center(source) - center(target);
  return t;
}

AffineTransform AffineTransform::scale_shift(Dims source, Dims target, double scale, const Eigen::Vector3d& shift) {
  AffineTransform t;
  t.source_dims = source;
  t.target_dims = target;
  t.linear = scale * Eigen::Matrix3d::Identity();
  t.translation = center(source) - scale * center(target) + shift;
  return t;
}

void AffineTransform::validate() const {
  if (!(std::abs(linear.determinant()) > 1e-9)) throw ArgumentError("affine transform is singular");
  if (!linear.allFinite() || !translation.allFinite()) throw ArgumentError("affine transform is not finite");
}

void RegistrationConfig::validate() const {
  if (histogram_bins < 2) throw ArgumentError("histogram_bins must be >= 2");
  if (mode == Mode::Identity) return;
  if (translation_range < 0) throw ArgumentError("translation range must be >= 0");
  if (translation_step < 1) throw ArgumentError("empty search grid: translation step must be >= 1");
  if (scales.empty()) throw ArgumentError("empty search grid: no scales");
  for (double s : scales)
    if (!(s > 0.0)) throw ArgumentError("search scales must be positive");
}

double nmi(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b, int bins) {
  if (a.size() != b.size())
    throw ArgumentError("nmi: image sizes differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (bins < 2) throw ArgumentError("nmi: bins must be >= 2");
  if (a.size() == 0) throw ArgumentError("nmi: empty images");
  const auto ia = bin_indices(a, bins);
  const auto ib = bin_indices(b, bins);
  Eigen::ArrayXXd joint = Eigen::ArrayXXd::Zero(bins, bins);
  for (std::size_t i = 0; i < ia.size(); ++i) joint(ia[i], ib[i]) += 1.0;
  const double n = double(a.size());
  const double hab = entropy(joint.reshaped(), n);
  if (hab <= 0.0) return 1.0;
  const double ha = entropy(joint.rowwise().sum(), n);
  const double hb = entropy(joint.colwise().sum().transpose(), n);
  return (ha + hb) / hab;
}

double nmi(const Volume3D& a, const Volume3D& b, int bins) {
  if (!(a.dims() == b.dims()))
    throw ArgumentError("nmi: dims differ (" + to_string(a.dims()) + " vs " + to_string(b.dims()) + ")");
  return nmi(a.data(), b.data(), bins);
}

Eigen::VectorXd apply_transform(const Eigen::Ref<const Eigen::VectorXd>& image, const AffineTransform& t) {
  const Dims& src = t.source_dims;
  const Dims& dst = t.target_dims;
  if (image.size() != src.size())
    throw ArgumentError("image has " + std::to_string(image.size()) + " voxels, transform source is " + to_string(src));
  t.validate();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dst.size());
  for (Index z = 0; z < Index(dst.nz); ++z)
    for (Index y = 0; y < Index(dst.ny); ++y)
      for (Index x = 0; x < Index(dst.nx); ++x) {
        const Eigen::Vector3d p = t.map(Eigen::Vector3d(double(x), double(y), double(z)));
        const Eigen::Vector3d base = p.array().floor();
        const Eigen::Vector3d frac = p - base;
        const Index x0 = Index(base.x()), y0 = Index(base.y()), z0 = Index(base.z());
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
          const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
          const double w = (dx ? frac.x() : 1.0 - frac.x()) * (dy ? frac.y() : 1.0 - frac.y()) *
                           (dz ? frac.z() : 1.0 - frac.z());
          if (w == 0.0 || !src.contains(x0 + dx, y0 + dy, z0 + dz)) continue;
          acc += w * image[src.index(x0 + dx, y0 + dy, z0 + dz)];
        }
        out[dst.index(x, y, z)] = acc;
      }
  return out;
}

Volume3D apply_transform(const Volume3D& image, const AffineTransform& t, const Eigen::Vector3d& target_voxel_mm) {
  if (!(image.dims() == t.source_dims))
    throw ArgumentError("image dims " + to_string(image.dims()) + " differ from transform source " +
                        to_string(t.source_dims));
  return Volume3D(t.target_dims, apply_transform(image.data(), t), target_voxel_mm);
}

std::vector<GridCandidate> score_grid(const Volume3D& moving, const Volume3D& reference,
                                      const RegistrationConfig& cfg) {
  cfg.validate();
  std::vector<GridCandidate> grid;
  std::vector<int> offsets;
  for (int s = -cfg.translation_range; s <= cfg.translation_range; s += cfg.translation_step) offsets.push_back(s);
  for (double scale : cfg.scales)
    for (int dx : offsets)
      for (int dy : offsets)
        for (int dz : offsets) {
          GridCandidate c;
          c.scale = scale;
          c.shift = {dx, dy, dz};
          c.transform = AffineTransform::scale_shift(moving.dims(), reference.dims(), scale, c.shift.cast<double>());
          grid.push_back(std::move(c));
        }
  parallel_for(Index(grid.size()), cfg.jobs, [&](Index i) {
    auto& c = grid[std::size_t(i)];
    c.score = nmi(apply_transform(moving.data(), c.transform), reference.data(), cfg.histogram_bins);
  });
  return grid;
}

AffineTransform find_transform(const Volume3D& moving, const Volume3D& reference, const RegistrationConfig& cfg) {
  cfg.validate();
  if (cfg.mode == RegistrationConfig::Mode::Identity) return AffineTransform::identity(moving.dims(), reference.dims());
  const auto grid = score_grid(moving, reference, cfg);
  if (grid.empty()) throw ArgumentError("empty search grid");
  const GridCandidate* best = &grid.front();
  for (const auto& c : grid)
    if (c.score > best->score) best = &c;
  return best->transform;
}

std::pair<const AffineTransform&, Eigen::VectorXd> select_transform(Index category,
                                                                    const std::vector<AffineTransform>& transforms,
                                                                    const CorrelationMap& betas) {
  if (category < 0 || category >= Index(transforms.size()) || category >= betas.p())
    throw LookupError("no transform/regressor map for category " + std::to_string(category));
  return {transforms[std::size_t(category)], betas.maps.col(category)};
}

void write_transforms(const std::vector<TransformRecord>& records, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "subject_id,category,m00,m01,m02,m10,m11,m12,m20,m21,m22,t0,t1,t2,"
         "src_nx,src_ny,src_nz,dst_nx,dst_ny,dst_nz\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.category;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ',' << format_double(r.transform.linear(i, j));
    for (int i = 0; i < 3; ++i) out << ',' << format_double(r.transform.translation[i]);
    const auto& s = r.transform.source_dims;
    const auto& d = r.transform.target_dims;
    out << ',' << s.nx << ',' << s.ny << ',' << s.nz << ',' << d.nx << ',' << d.ny << ',' << d.nz << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<TransformRecord> read_transforms(const std::filesystem::path& path) {
  const auto lines = read_lines(read_file(path));
  if (lines.empty() || !lines.front().starts_with("subject_id,category,m00"))
    throw FormatError(path.string() + ": missing transform header");
  std::vector<TransformRecord> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto f = split_fields(lines[n]);
    const std::string where = path.string() + ":" + std::to_string(n + 1);
    if (f.size() != 20) throw FormatError(where + ": expected 20 fields, got " + std::to_string(f.size()));
    TransformRecord r{f[0], f[1], {}};
    for (int i = 0; i < 9; ++i) r.transform.linear(i / 3, i % 3) = parse_double(f[std::size_t(2 + i)], where);
    for (int i = 0; i < 3; ++i) r.transform.translation[i] = parse_double(f[std::size_t(11 + i)], where);
    auto dim = [&](std::size_t k) { return std::uint32_t(parse_int(f[k], where)); };
    r.transform.source_dims = {dim(14), dim(15), dim(16)};
    r.transform.target_dims = {dim(17), dim(18), dim(19)};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mrnr

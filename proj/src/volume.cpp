#include "mrnr/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "mrnr/errors.hpp"

namespace mrnr {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'N', 'R'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 1 + 3 * 4 + 3 * 8;

template <typename T>
void put_le(std::vector<char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(char((bits >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(const std::vector<char>& in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= U(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return std::bit_cast<T>(bits);
}

bool is_int32_value(double v) {
  return std::isfinite(v) && v == std::floor(v) && v >= double(std::numeric_limits<std::int32_t>::min()) &&
         v <= double(std::numeric_limits<std::int32_t>::max());
}

}  // namespace

std::string to_string(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

Volume3D::Volume3D(Dims dims, Eigen::VectorXd data, Eigen::Vector3d voxel_size_mm, DType dtype)
    : dims_(dims), data_(std::move(data)), voxel_size_(voxel_size_mm), dtype_(dtype) {
  if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0)
    throw ArgumentError("volume dims must be positive, got " + to_string(dims_));
  if (data_.size() != dims_.size())
    throw ArgumentError("volume data length " + std::to_string(data_.size()) + " does not match dims " +
                        to_string(dims_));
  if (!(voxel_size_.array() > 0.0).all() || !voxel_size_.allFinite())
    throw ArgumentError("voxel size must be positive and finite");
}

Volume3D Volume3D::zeros(Dims dims, Eigen::Vector3d voxel_size_mm) {
  return Volume3D(dims, Eigen::VectorXd::Zero(dims.size()), voxel_size_mm);
}

bool Volume3D::all_finite() const { return data_.allFinite(); }

bool operator==(const Volume3D& a, const Volume3D& b) {
  return a.dims_ == b.dims_ && a.dtype_ == b.dtype_ && a.voxel_size_ == b.voxel_size_ && a.data_ == b.data_;
}

void BoldSeries::validate() const {
  if (!(tr_seconds > 0.0)) throw ArgumentError("BOLD series " + subject_id + ": tr_seconds must be > 0");
  if (samples.rows() < 1) throw ArgumentError("BOLD series " + subject_id + " has no time samples");
  if (dims.size() != samples.cols())
    throw ArgumentError("BOLD series " + subject_id + ": " + std::to_string(samples.cols()) +
                        " voxels per sample do not match dims " + to_string(dims));
}

const std::vector<Index>& Atlas::region(int label) const {
  if (label < 1 || label > region_count())
    throw LookupError("atlas has no region " + std::to_string(label) + " (L = " + std::to_string(region_count()) +
                      ")");
  return region_index_[std::size_t(label - 1)];
}

Atlas atlas_from_labels(const Volume3D& labels) {
  Atlas atlas;
  const auto& values = labels.data();
  int max_label = 0;
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!is_int32_value(v) || v < 0)
      throw FormatError("atlas label at voxel " + std::to_string(i) + " is not a non-negative integer");
    max_label = std::max(max_label, int(v));
  }
  atlas.region_index_.assign(std::size_t(max_label), {});
  for (Index i = 0; i < values.size(); ++i) {
    const int label = int(values[i]);
    if (label > 0) atlas.region_index_[std::size_t(label - 1)].push_back(i);
  }
  atlas.labels_ = Volume3D(labels.dims(), labels.data(), labels.voxel_size(), DType::Int32);
  return atlas;
}

Index OnsetSchedule::category_index(const std::string& name) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i].name == name) return Index(i);
  throw LookupError("unknown category '" + name + "'");
}

std::vector<std::string> OnsetSchedule::names() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.push_back(c.name);
  return out;
}

OnsetSchedule OnsetSchedule::reordered(const std::vector<std::string>& names) const {
  for (const auto& c : categories)
    if (std::find(names.begin(), names.end(), c.name) == names.end())
      throw LookupError("category '" + c.name + "' is not in the experiment vocabulary");
  OnsetSchedule out;
  for (const auto& n : names) {
    auto it = std::find_if(categories.begin(), categories.end(), [&](const auto& c) { return c.name == n; });
    out.categories.push_back(it != categories.end() ? *it : EventCategory{n, {}, {}});
  }
  return out;
}

void OnsetSchedule::validate(Index t) const {
  if (categories.empty()) throw ArgumentError("onset schedule has no categories");
  for (const auto& c : categories) {
    if (c.onsets.size() != c.durations.size())
      throw ArgumentError("category '" + c.name + "': onsets and durations differ in length");
    for (std::size_t k = 0; k < c.onsets.size(); ++k) {
      const std::string event = "category '" + c.name + "' event " + std::to_string(k);
      if (k > 0 && c.onsets[k] <= c.onsets[k - 1]) throw ArgumentError(event + ": onsets not strictly increasing");
      if (c.durations[k] < 1) throw ArgumentError(event + ": duration must be >= 1 sample");
      if (c.onsets[k] < 0 || c.onsets[k] + c.durations[k] > t)
        throw ArgumentError(event + ": onset " + std::to_string(c.onsets[k]) + " + duration " +
                            std::to_string(c.durations[k]) + " exceeds series length " + std::to_string(t));
    }
  }
}

std::vector<char> encode_volume(const Volume3D& v) {
  if (!v.all_finite()) throw ArgumentError("refusing to write a volume with non-finite values");
  std::vector<char> out;
  const std::size_t value_bytes = v.dtype() == DType::Float64 ? 8 : 4;
  out.reserve(kHeaderBytes + std::size_t(v.size()) * value_bytes);
  for (int i = 0; i < 4; ++i) out.push_back(kMagic[i]);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(v.dtype()));
  put_le<std::uint8_t>(out, 0);
  put_le<std::uint32_t>(out, v.dims().nx);
  put_le<std::uint32_t>(out, v.dims().ny);
  put_le<std::uint32_t>(out, v.dims().nz);
  for (int a = 0; a < 3; ++a) put_le<double>(out, v.voxel_size()[a]);
  if (v.dtype() == DType::Float64) {
    for (Index i = 0; i < v.size(); ++i) put_le<double>(out, v[i]);
  } else {
    for (Index i = 0; i < v.size(); ++i) {
      if (!is_int32_value(v[i]))
        throw ArgumentError("int32 volume holds non-integer value at voxel " + std::to_string(i));
      put_le<std::int32_t>(out, std::int32_t(v[i]));
    }
  }
  return out;
}

Volume3D decode_volume(const std::vector<char>& bytes, const std::string& origin) {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw FormatError(origin + ": " + field + ": " + why);
  };
  if (bytes.size() < kHeaderBytes) fail("header", "file shorter than the 44-byte header");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) fail("magic", "expected \"MRNR\"");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kVersion) fail("version", "unsupported version " + std::to_string(version));
  const auto dtype_code = get_le<std::uint8_t>(bytes, 6);
  if (dtype_code != 1 && dtype_code != 2) fail("dtype", "unknown code " + std::to_string(dtype_code));
  if (get_le<std::uint8_t>(bytes, 7) != 0) fail("reserved", "must be 0");
  Dims dims{get_le<std::uint32_t>(bytes, 8), get_le<std::uint32_t>(bytes, 12), get_le<std::uint32_t>(bytes, 16)};
  if (dims.nx == 0) fail("nx", "must be positive");
  if (dims.ny == 0) fail("ny", "must be positive");
  if (dims.nz == 0) fail("nz", "must be positive");
  Eigen::Vector3d voxel(get_le<double>(bytes, 20), get_le<double>(bytes, 28), get_le<double>(bytes, 36));
  const char* axis[3] = {"sx", "sy", "sz"};
  for (int a = 0; a < 3; ++a)
    if (!(voxel[a] > 0.0) || !std::isfinite(voxel[a])) fail(axis[a], "voxel size must be positive and finite");

  const auto dtype = static_cast<DType>(dtype_code);
  const std::uint64_t value_bytes = dtype == DType::Float64 ? 8 : 4;
  const std::uint64_t count = std::uint64_t(dims.nx) * dims.ny * dims.nz;
  // 2^64 / 8 is far above any addressable payload, so overflow only occurs in the byte product.
  if (count > (std::numeric_limits<std::uint64_t>::max() - kHeaderBytes) / value_bytes ||
      count > std::uint64_t(std::numeric_limits<Index>::max()))
    fail("dims", to_string(dims) + " overflows the addressable size");
  const std::uint64_t expected = kHeaderBytes + count * value_bytes;
  if (bytes.size() < expected)
    fail("data", "truncated: expected " + std::to_string(count) + " values, payload holds " +
                     std::to_string((bytes.size() - kHeaderBytes) / value_bytes));
  if (bytes.size() > expected) fail("data", "trailing bytes after " + std::to_string(count) + " values");

  Eigen::VectorXd data(static_cast<Index>(count));
  std::size_t offset = kHeaderBytes;
  for (Index i = 0; i < data.size(); ++i, offset += value_bytes) {
    data[i] = dtype == DType::Float64 ? get_le<double>(bytes, offset) : double(get_le<std::int32_t>(bytes, offset));
    if (!std::isfinite(data[i])) fail("data", "non-finite value at voxel " + std::to_string(i));
  }
  return Volume3D(dims, std::move(data), voxel, dtype);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Volume3D read_volume(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return decode_volume(std::vector<char>(raw.begin(), raw.end()), path.string());
}

void write_volume(const Volume3D& v, const std::filesystem::path& path) {
  const auto bytes = encode_volume(v);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

OnsetSchedule read_onsets(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty onset file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "category_name,onset_sample,duration_samples")
    throw FormatError(path.string() + ": header must be 'category_name,onset_sample,duration_samples'");

  OnsetSchedule schedule;
  std::map<std::string, std::size_t> slot;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, onset, duration;
    if (!std::getline(fields, name, ',') || !std::getline(fields, onset, ',') || !std::getline(fields, duration))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    Index on = 0, dur = 0;
    try {
      std::size_t used = 0;
      on = std::stoll(onset, &used);
      if (used != onset.size()) throw std::invalid_argument("trailing");
      dur = std::stoll(duration, &used);
      if (used != duration.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": onset/duration must be integers");
    }
    auto [it, inserted] = slot.try_emplace(name, schedule.categories.size());
    if (inserted) schedule.categories.push_back({name, {}, {}});
    schedule.categories[it->second].onsets.push_back(on);
    schedule.categories[it->second].durations.push_back(dur);
  }
  return schedule;
}

void write_onsets(const OnsetSchedule& schedule, const std::filesystem::path& path) {
  struct Row {
    Index onset;
    std::size_t category;
    Index duration;
  };
  std::vector<Row> rows;
  for (std::size_t c = 0; c < schedule.categories.size(); ++c)
    for (std::size_t k = 0; k < schedule.categories[c].onsets.size(); ++k)
      rows.push_back({schedule.categories[c].onsets[k], c, schedule.categories[c].durations[k]});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.onset < b.onset; });
  std::ostringstream out;
  out << "category_name,onset_sample,duration_samples\n";
  for (const auto& r : rows) out << schedule.categories[r.category].name << ',' << r.onset << ',' << r.duration << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace mrnr

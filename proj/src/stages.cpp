#include "mrnr/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "mrnr/errors.hpp"
#include "mrnr/eval.hpp"
#include "mrnr/model.hpp"
#include "mrnr/parallel.hpp"
#include "mrnr/text.hpp"

#ifndef MRNR_VERSION
#define MRNR_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mrnr {

namespace {

std::string g_active_stage = "cli";

std::string hex_digest(const unsigned char* md, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(digits[md[i] >> 4]);
    out.push_back(digits[md[i] & 15]);
  }
  return out;
}

std::string sha256_bytes(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw Error("SHA-256 failed");
  return hex_digest(md, len);
}

// Files under `dir`, relative, sorted.
std::vector<fs::path> list_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

// One digest for a whole directory: SHA-256 over "relative-path  file-digest" lines.
std::string sha256_tree(const fs::path& dir) {
  std::string lines;
  for (const auto& rel : list_tree(dir)) {
    if (rel.filename() == "run_manifest.json" || rel.filename() == "error.json") continue;
    lines += rel.generic_string() + "  " + sha256_file(dir / rel) + "\n";
  }
  return sha256_bytes(lines);
}

// Tracks the files a stage writes so the manifest can list and hash them.
class StageWriter {
 public:
  StageWriter(std::string stage, fs::path dir, const PipelineConfig& cfg)
      : stage_(std::move(stage)), dir_(std::move(dir)), cfg_(cfg) {
    fs::create_directories(dir_);
  }

  fs::path path(const fs::path& rel) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }

  void write(const fs::path& rel, const std::string& bytes) {
    write_file_atomic(path(rel), bytes);
    record(rel);
  }

  void write_volume(const fs::path& rel, const Volume3D& v) {
    const auto bytes = encode_volume(v);
    write(rel, std::string(bytes.begin(), bytes.end()));
  }

  void record(const fs::path& rel) { outputs_.push_back(rel); }

  void input_file(const std::string& name, const fs::path& p) {
    if (!fs::exists(p)) throw DataError("missing input " + p.string());
    inputs_[name] = sha256_file(p);
  }

  void input_tree(const std::string& name, const fs::path& p) {
    if (!fs::is_directory(p)) throw DataError("missing input directory " + p.string());
    inputs_[name] = sha256_tree(p);
  }

  void finish() {
    json m;
    m["tool"] = "mrnr";
    m["version"] = MRNR_VERSION;
    m["stage"] = stage_;
    m["config"] = cfg_.to_json(true);
    m["inputs"] = json::object();
    for (const auto& [k, v] : inputs_) m["inputs"][k] = v;
    std::sort(outputs_.begin(), outputs_.end());
    m["outputs"] = json::object();
    for (const auto& rel : outputs_) m["outputs"][rel.generic_string()] = sha256_file(dir_ / rel);
    write_file_atomic(dir_ / "run_manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string stage_;
  fs::path dir_;
  const PipelineConfig& cfg_;
  std::map<std::string, std::string> inputs_;
  std::vector<fs::path> outputs_;
};

fs::path stage_dir(const PipelineConfig& cfg, const std::string& stage) { return cfg.out / stage; }

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

std::string frame_name(Index j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05ld.vol", long(j));
  return buf;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXd read_matrix_csv(const fs::path& p, const std::vector<std::string>& expected_header) {
  const auto lines = read_lines(read_file(p));
  if (lines.empty()) throw FormatError(p.string() + ": empty file");
  if (split_fields(lines[0]) != expected_header) throw FormatError(p.string() + ": unexpected header");
  Eigen::MatrixXd m(Index(lines.size() - 1), Index(expected_header.size()));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split_fields(lines[r]);
    if (f.size() != expected_header.size())
      throw FormatError(p.string() + ":" + std::to_string(r + 1) + ": expected " +
                        std::to_string(expected_header.size()) + " fields");
    for (std::size_t c = 0; c < f.size(); ++c)
      m(Index(r - 1), Index(c)) = parse_double(f[c], p.string() + ":" + std::to_string(r + 1));
  }
  return m;
}

struct SubjectEntry {
  std::string id;
  double tr = 1.0;
  Index t = 0;
  fs::path frames;
  fs::path onsets;
};

struct ExperimentIndex {
  std::vector<std::string> categories;
  std::vector<SubjectEntry> subjects;
};

ExperimentIndex read_index(const fs::path& data) {
  const auto p = data / "experiment.json";
  if (!fs::exists(p)) throw DataError("missing input " + p.string() + " (run `simulate` or set data_dir)");
  const auto j = read_json(p);
  ExperimentIndex idx;
  try {
    idx.categories = j.at("categories").get<std::vector<std::string>>();
    for (const auto& s : j.at("subjects"))
      idx.subjects.push_back({s.at("id").get<std::string>(), s.at("tr").get<double>(), s.at("t").get<Index>(),
                              data / s.at("frames").get<std::string>(), data / s.at("onsets").get<std::string>()});
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  if (idx.subjects.empty()) throw DataError(p.string() + " lists no subjects");
  return idx;
}

SubjectData read_subject(const SubjectEntry& e, const std::vector<std::string>& categories) {
  SubjectData s;
  s.bold.subject_id = e.id;
  s.bold.tr_seconds = e.tr;
  if (e.t < 1) throw DataError("subject " + e.id + " has no frames");
  for (Index j = 0; j < e.t; ++j) {
    const auto v = read_volume(e.frames / frame_name(j));
    if (j == 0) {
      s.bold.dims = v.dims();
      s.bold.voxel_size_mm = v.voxel_size();
      s.bold.samples.resize(e.t, v.size());
    } else if (!(v.dims() == s.bold.dims)) {
      throw DataError("subject " + e.id + " frame " + std::to_string(j) + " has dims " + to_string(v.dims()) +
                      ", frame 0 has " + to_string(s.bold.dims));
    }
    s.bold.samples.row(j) = v.data().transpose();
  }
  s.schedule = read_onsets(e.onsets).reordered(categories);
  return s;
}

Volume3D volume_from_map(const Eigen::VectorXd& v, const BoldSeries& bold) {
  return Volume3D(bold.dims, v, bold.voxel_size_mm);
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out;
}

// ---- stages ----------------------------------------------------------------

void stage_simulate(const PipelineConfig& cfg, std::ostream& log) {
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const auto synth = generate(sc);
  write_experiment(synth, cfg.data_path());
  // thousands of frame files: the manifest pins the whole tree with one digest
  json m;
  m["tool"] = "mrnr";
  m["version"] = MRNR_VERSION;
  m["stage"] = "simulate";
  m["config"] = cfg.to_json(true);
  m["inputs"] = json::object();
  m["outputs"] = {{"files", list_tree(cfg.data_path()).size()}, {"tree_sha256", sha256_tree(cfg.data_path())}};
  write_file_atomic(cfg.data_path() / "run_manifest.json", m.dump(2) + "\n");
  log << "simulate: " << synth.experiment.subjects.size() << " subjects written to " << cfg.data_path().string()
      << "\n";
}

void stage_design(const PipelineConfig& cfg, std::ostream& log) {
  const auto data = cfg.data_path();
  const auto idx = read_index(data);
  StageWriter w("design", stage_dir(cfg, "design"), cfg);
  w.input_tree("data", data);

  std::vector<SubjectDesign> designs(idx.subjects.size());
  std::vector<SubjectData> subjects(idx.subjects.size());
  parallel_for(Index(idx.subjects.size()), cfg.params.jobs, [&](Index u) {
    subjects[std::size_t(u)] = read_subject(idx.subjects[std::size_t(u)], idx.categories);
    designs[std::size_t(u)] = design_subject(subjects[std::size_t(u)], cfg.params);
  });

  json summary = json::array();
  for (std::size_t u = 0; u < designs.size(); ++u) {
    const auto& d = designs[u];
    const auto& s = subjects[u];
    const fs::path sub = safe_name(s.bold.subject_id);
    w.write(sub / "design.csv", matrix_csv(d.design.columns, idx.categories));
    for (Index c = 0; c < d.betas.p(); ++c)
      w.write_volume(sub / ("beta_" + safe_name(idx.categories[std::size_t(c)]) + ".vol"),
                     volume_from_map(d.betas.maps.col(c), s.bold));
    summary.push_back({{"subject_id", s.bold.subject_id}, {"t", d.design.t()}, {"p", d.design.p()}, {"rho", d.rho}});
  }
  w.write("design.json", json{{"subjects", summary}}.dump(2) + "\n");
  w.finish();
  log << "design: " << designs.size() << " subjects\n";
}

void stage_snapshot(const PipelineConfig& cfg, std::ostream& log) {
  const auto data = cfg.data_path();
  const auto idx = read_index(data);
  const auto design_dir = stage_dir(cfg, "design");
  StageWriter w("snapshot", stage_dir(cfg, "snapshot"), cfg);
  w.input_tree("data", data);
  w.input_tree("design", design_dir);

  std::vector<SubjectSnapshots> snaps(idx.subjects.size());
  parallel_for(Index(idx.subjects.size()), cfg.params.jobs, [&](Index u) {
    const auto& e = idx.subjects[std::size_t(u)];
    const auto subject = read_subject(e, idx.categories);
    DesignMatrix d;
    d.names = idx.categories;
    d.columns = read_matrix_csv(design_dir / safe_name(e.id) / "design.csv", idx.categories);
    if (d.t() != subject.bold.t())
      throw DataError("design for " + e.id + " has " + std::to_string(d.t()) + " rows, series has " +
                      std::to_string(subject.bold.t()));
    snaps[std::size_t(u)] = select_snapshots(subject, d, cfg.params);
  });

  Index total = 0;
  for (std::size_t u = 0; u < snaps.size(); ++u) {
    const auto& e = idx.subjects[u];
    const fs::path sub = safe_name(e.id);
    w.write(sub / "smoothed.csv", matrix_csv(snaps[u].smoothed.columns, idx.categories));
    std::ostringstream out;
    out << "snapshot_id,category,time_index\n";
    const auto& set = snaps[u].set;
    for (Index k = 0; k < set.q(); ++k) {
      const auto& s = set.snapshots[std::size_t(k)];
      out << snapshot_id(e.id, k) << ',' << set.category_names[std::size_t(s.category)] << ',' << s.time_index << '\n';
    }
    w.write(sub / "snapshots.csv", out.str());
    total += set.q();
  }
  w.finish();
  log << "snapshot: " << total << " snapshots over " << snaps.size() << " subjects (sigma_g = "
      << format_double(cfg.params.sigma_g) << ")\n";
}

SnapshotSet read_snapshot_set(const fs::path& p, const BoldSeries& bold, const std::vector<std::string>& categories) {
  const auto lines = read_lines(read_file(p));
  if (lines.empty() || lines[0] != "snapshot_id,category,time_index") throw FormatError(p.string() + ": bad header");
  SnapshotSet set;
  set.category_names = categories;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split_fields(lines[r]);
    const std::string where = p.string() + ":" + std::to_string(r + 1);
    if (f.size() != 3) throw FormatError(where + ": expected 3 fields");
    const auto it = std::find(categories.begin(), categories.end(), f[1]);
    if (it == categories.end()) throw LookupError(where + ": unknown category '" + f[1] + "'");
    const Index t = parse_int(f[2], where);
    if (t < 0 || t >= bold.t()) throw FormatError(where + ": time index out of range");
    set.snapshots.push_back({Index(it - categories.begin()), t, bold.samples.row(t).transpose()});
  }
  return set;
}

void stage_extract(const PipelineConfig& cfg, std::ostream& log) {
  const auto data = cfg.data_path();
  const auto idx = read_index(data);
  const auto design_dir = stage_dir(cfg, "design");
  const auto snapshot_dir = stage_dir(cfg, "snapshot");
  StageWriter w("extract", stage_dir(cfg, "extract"), cfg);
  w.input_tree("data", data);
  w.input_file("atlas", cfg.atlas_path());
  w.input_file("reference", cfg.reference_path());
  w.input_tree("design", design_dir);
  w.input_tree("snapshot", snapshot_dir);

  const auto atlas = atlas_from_labels(read_volume(cfg.atlas_path()));
  const auto reference = read_volume(cfg.reference_path());
  if (!(atlas.labels().dims() == reference.dims()))
    throw DataError("atlas dims " + to_string(atlas.labels().dims()) + " differ from reference dims " +
                    to_string(reference.dims()));
  const auto layout = FeatureLayout::from_atlas(atlas);

  const std::size_t n = idx.subjects.size();
  std::vector<SubjectFeatures> features(n);
  std::vector<SnapshotSet> raw(n);
  parallel_for(Index(n), cfg.params.jobs, [&](Index u) {
    const auto& e = idx.subjects[std::size_t(u)];
    const auto subject = read_subject(e, idx.categories);
    const fs::path sub = safe_name(e.id);
    raw[std::size_t(u)] = read_snapshot_set(snapshot_dir / sub / "snapshots.csv", subject.bold, idx.categories);
    CorrelationMap betas;
    betas.maps.resize(subject.bold.m(), Index(idx.categories.size()));
    for (std::size_t c = 0; c < idx.categories.size(); ++c) {
      const auto v = read_volume(design_dir / sub / ("beta_" + safe_name(idx.categories[c]) + ".vol"));
      if (!(v.dims() == subject.bold.dims)) throw DataError("regressor map for " + e.id + " has wrong dims");
      betas.maps.col(Index(c)) = v.data();
    }
    features[std::size_t(u)] =
        extract_subject_features(e.id, subject.bold.dims, subject.bold.voxel_size_mm, raw[std::size_t(u)], betas,
                                 atlas, layout, reference, cfg.params);
  });

  const auto table = make_feature_table(features, layout);
  write_feature_table(table, w.path("features.csv"), w.path("offsets.csv"));
  w.record("features.csv");
  w.record("offsets.csv");

  std::vector<TransformRecord> records;
  std::ostringstream active;
  active << "snapshot_id,active_regions\n";
  for (const auto& f : features) {
    for (std::size_t c = 0; c < f.transforms.size(); ++c) records.push_back({f.subject_id, idx.categories[c], f.transforms[c]});
    for (std::size_t k = 0; k < f.active.size(); ++k) {
      active << f.snapshot_ids[k] << ',';
      for (std::size_t i = 0; i < f.active[k].regions.size(); ++i) active << (i ? ";" : "") << f.active[k].regions[i];
      active << '\n';
    }
  }
  write_transforms(records, w.path("transforms.csv"));
  w.record("transforms.csv");
  w.write("active.csv", active.str());

  // category structure before and after extraction, on the standard grid when shapes agree
  if (idx.categories.size() >= 2) {
    Index raw_rows = 0;
    for (const auto& s : raw) raw_rows += s.q();
    const Index m = raw.front().snapshots.empty() ? 0 : raw.front().snapshots.front().image.size();
    bool uniform = true;
    for (const auto& s : raw)
      for (const auto& sn : s.snapshots) uniform = uniform && sn.image.size() == m;
    if (uniform && raw_rows > 0) {
      Eigen::MatrixXd raw_matrix(raw_rows, m);
      std::vector<std::string> raw_categories;
      Index r = 0;
      for (const auto& s : raw)
        for (const auto& sn : s.snapshots) {
          raw_matrix.row(r++) = sn.image.transpose();
          raw_categories.push_back(s.category_names[std::size_t(sn.category)]);
        }
      const auto corr = correlation_matrices(table.values, table.categories, raw_matrix, raw_categories, idx.categories);
      auto matrix_json = [](const Eigen::MatrixXd& mat, const Eigen::Matrix<bool, -1, -1>& undef) {
        json rows = json::array();
        for (Index i = 0; i < mat.rows(); ++i) {
          json row = json::array();
          for (Index j = 0; j < mat.cols(); ++j) row.push_back(undef(i, j) ? json(nullptr) : json(mat(i, j)));
          rows.push_back(row);
        }
        return rows;
      };
      json cj;
      cj["categories"] = idx.categories;
      cj["voxel"] = matrix_json(corr.voxel, corr.voxel_undefined);
      cj["feature"] = matrix_json(corr.feature, corr.feature_undefined);
      cj["voxel_mean_abs_off_diagonal"] = CorrelationResult::mean_abs_off_diagonal(corr.voxel, corr.voxel_undefined);
      cj["feature_mean_abs_off_diagonal"] =
          CorrelationResult::mean_abs_off_diagonal(corr.feature, corr.feature_undefined);
      w.write("correlation.json", cj.dump(2) + "\n");
    }
  }
  w.finish();
  log << "extract: " << table.rows() << " feature rows of width " << layout.total() << "\n";
}

FeatureTable read_features(const PipelineConfig& cfg, StageWriter& w) {
  const auto dir = stage_dir(cfg, "extract");
  w.input_file("features.csv", dir / "features.csv");
  w.input_file("offsets.csv", dir / "offsets.csv");
  return read_feature_table(dir / "features.csv", dir / "offsets.csv");
}

void stage_train(const PipelineConfig& cfg, std::ostream& log) {
  StageWriter w("train", stage_dir(cfg, "train"), cfg);
  const auto table = read_features(cfg, w);
  if (std::find(table.categories.begin(), table.categories.end(), cfg.target) == table.categories.end())
    throw LookupError("target category '" + cfg.target + "' does not occur in the feature table");

  // canonical (subject, snapshot) row order, labels drawn over it
  const auto rows = training_rows(table, std::string());
  Eigen::MatrixXd x(Index(rows.size()), table.values.cols());
  std::vector<std::string> cats;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(Index(i)) = table.values.row(rows[i]);
    cats.push_back(table.categories[std::size_t(rows[i])]);
  }
  const auto y = target_labels(cats, cfg.target, cfg.shuffle_seed());
  const auto model = train_ensemble(x, y, table.layout, cfg.target, cfg.params.svm_c, cfg.params.append_bias,
                                    cfg.params.jobs);
  write_model(model, w.path("model.csv"));
  w.record("model.csv");
  w.finish();
  log << "train: " << model.classifiers.size() << " region classifiers on " << rows.size() << " snapshots\n";
}

void stage_evaluate(const PipelineConfig& cfg, std::ostream& log) {
  StageWriter w("evaluate", stage_dir(cfg, "evaluate"), cfg);
  const auto table = read_features(cfg, w);
  std::vector<EnsembleModel> models;
  LooOptions opt;
  opt.svm_c = cfg.params.svm_c;
  opt.append_bias = cfg.params.append_bias;
  opt.jobs = cfg.params.jobs;
  opt.shuffle_seed = cfg.shuffle_seed();
  opt.fold_models = &models;
  auto report = loo_evaluate(table, cfg.target, opt);
  report.config = cfg.to_json(false);

  w.write("report.json", report.to_json().dump(2) + "\n");
  w.write("report.txt", report.to_table());
  w.write("scores.csv", report.scores_csv());
  for (std::size_t u = 0; u < report.folds.size(); ++u) {
    if (!report.folds[u].completed) continue;
    const fs::path rel = fs::path("models") / (safe_name(report.folds[u].subject_id) + ".csv");
    write_model(models[u], w.path(rel));
    w.record(rel);
  }
  w.finish();
  log << report.to_table();
}

}  // namespace

const std::string& active_stage() { return g_active_stage; }

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_file(path)); }

void validate_config(const PipelineConfig& cfg) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  const auto& p = cfg.params;
  require(p.sigma_g > 0.0, "sigma_g must be > 0");
  require(p.svm_c > 0.0, "svm_c must be > 0");
  require(p.hrf_length_seconds > 0.0, "hrf_length must be > 0");
  require(p.jobs >= 1, "jobs must be >= 1");
  require(!cfg.target.empty(), "target must name a category");
  require(!cfg.out.empty(), "out must name a directory");
  try {
    p.registration.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("registration: ") + e.what());
  }
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  sc.validate();
}

void write_experiment(const SynthExperiment& synth, const fs::path& data) {
  const auto& exp = synth.experiment;
  fs::create_directories(data);
  json index;
  index["categories"] = exp.categories;
  index["atlas"] = "atlas.vol";
  index["reference"] = "reference.vol";
  index["subjects"] = json::array();

  auto put_volume = [&](const fs::path& p, const Volume3D& v) {
    fs::create_directories(p.parent_path());
    const auto bytes = encode_volume(v);
    write_file_atomic(p, std::string(bytes.begin(), bytes.end()));
  };
  put_volume(data / "atlas.vol", exp.atlas.labels());
  put_volume(data / "reference.vol", exp.reference);

  for (const auto& s : exp.subjects) {
    const fs::path sub = safe_name(s.bold.subject_id);
    for (Index j = 0; j < s.bold.t(); ++j)
      put_volume(data / sub / "bold" / frame_name(j),
                 Volume3D(s.bold.dims, s.bold.samples.row(j).transpose(), s.bold.voxel_size_mm));
    write_onsets(s.schedule, data / sub / "onsets.csv");
    index["subjects"].push_back({{"id", s.bold.subject_id},
                                 {"tr", s.bold.tr_seconds},
                                 {"t", s.bold.t()},
                                 {"frames", (sub / "bold").generic_string()},
                                 {"onsets", (sub / "onsets.csv").generic_string()}});
  }
  write_file_atomic(data / "experiment.json", index.dump(2) + "\n");

  const auto& truth = synth.truth;
  json gt;
  gt["hrf_peak_offset"] = truth.hrf_peak_offset;
  gt["native_shift"] = {truth.native_shift.x(), truth.native_shift.y(), truth.native_shift.z()};
  gt["informative_regions"] = json::object();
  gt["betas"] = json::object();
  const Dims dims = exp.atlas.labels().dims();
  for (std::size_t c = 0; c < exp.categories.size(); ++c) {
    const auto& name = exp.categories[c];
    gt["informative_regions"][name] = truth.informative[c];
    const std::string file = "truth/beta_" + safe_name(name) + ".vol";
    put_volume(data / file, Volume3D(dims, truth.betas.col(Index(c))));
    gt["betas"][name] = file;
  }
  gt["peak_times"] = json::object();
  for (std::size_t u = 0; u < exp.subjects.size(); ++u) {
    json per = json::object();
    for (std::size_t c = 0; c < exp.categories.size(); ++c) per[exp.categories[c]] = truth.peak_times[u][c];
    gt["peak_times"][exp.subjects[u].bold.subject_id] = per;
  }
  write_file_atomic(data / "ground_truth.json", gt.dump(2) + "\n");
}

Experiment read_experiment(const PipelineConfig& cfg) {
  const auto idx = read_index(cfg.data_path());
  Experiment exp;
  exp.categories = idx.categories;
  exp.atlas = atlas_from_labels(read_volume(cfg.atlas_path()));
  exp.reference = read_volume(cfg.reference_path());
  exp.params = cfg.params;
  for (const auto& e : idx.subjects) exp.subjects.push_back(read_subject(e, idx.categories));
  exp.validate();
  return exp;
}

void run_stage(const std::string& command, const PipelineConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  auto run = [&](const std::string& stage, void (*fn)(const PipelineConfig&, std::ostream&)) {
    g_active_stage = stage;
    fn(cfg, log);
  };
  if (command == "simulate") return run("simulate", stage_simulate);
  if (command == "design") return run("design", stage_design);
  if (command == "snapshot") return run("snapshot", stage_snapshot);
  if (command == "extract") return run("extract", stage_extract);
  if (command == "train") return run("train", stage_train);
  if (command == "evaluate") return run("evaluate", stage_evaluate);
  if (command == "pipeline") {
    if (cfg.data_dir.empty()) run("simulate", stage_simulate);
    run("design", stage_design);
    run("snapshot", stage_snapshot);
    run("extract", stage_extract);
    run("train", stage_train);
    run("evaluate", stage_evaluate);
    return;
  }
  throw ConfigError("unknown command '" + command + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
  return 1;
}

nlohmann::ordered_json error_record(const std::exception& e, const std::string& stage) {
  const char* cls = "InternalError";
  if (dynamic_cast<const ConfigError*>(&e))
    cls = "ConfigError";
  else if (dynamic_cast<const NumericalError*>(&e))
    cls = "NumericalError";
  else if (dynamic_cast<const TrainingError*>(&e))
    cls = "TrainingError";
  else if (dynamic_cast<const DataError*>(&e))
    cls = "DataError";
  else if (dynamic_cast<const FormatError*>(&e))
    cls = "FormatError";
  else if (dynamic_cast<const LookupError*>(&e))
    cls = "LookupError";
  else if (dynamic_cast<const ArgumentError*>(&e))
    cls = "ArgumentError";
  else if (dynamic_cast<const Error*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
    cls = "IOError";
  json j;
  j["error"] = {{"class", cls}, {"stage", stage}, {"message", e.what()}};
  j["exit_code"] = exit_code_for(e);
  return j;
}

}  // namespace mrnr

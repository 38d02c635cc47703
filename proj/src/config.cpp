#include "mrnr/config.hpp"

#include <charconv>
#include <functional>
#include <vector>

#include "mrnr/errors.hpp"
#include "mrnr/text.hpp"

namespace mrnr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double as_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v, key);
  } catch (const FormatError&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long as_int(const std::string& key, const std::string& v) {
  try {
    return parse_int(v, key);
  } catch (const FormatError&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected an unsigned 64-bit integer, got '" + v + "'");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> as_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& f : split_fields(v)) out.push_back(as_double(key, trim(f)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

struct Key {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string name, std::function<void(PipelineConfig&, const std::string&)> f) {
      k.push_back({std::move(name), std::move(f)});
    };
    add("out", [](auto& c, const auto& v) { c.out = v; });
    add("data_dir", [](auto& c, const auto& v) { c.data_dir = v; });
    add("atlas", [](auto& c, const auto& v) { c.atlas = v; });
    add("reference", [](auto& c, const auto& v) { c.reference = v; });
    add("target", [](auto& c, const auto& v) { c.target = v; });
    add("seed", [](auto& c, const auto& v) { c.seed = as_u64("seed", v); });
    add("shuffle_labels", [](auto& c, const auto& v) { c.shuffle_labels = as_bool("shuffle_labels", v); });
    add("jobs", [](auto& c, const auto& v) {
      const auto n = as_int("jobs", v);
      if (n < 1) throw ConfigError("config key 'jobs' must be >= 1");
      c.params.jobs = c.params.registration.jobs = int(n);
    });
    add("sigma_g", [](auto& c, const auto& v) { c.params.sigma_g = as_double("sigma_g", v); });
    add("svm_c", [](auto& c, const auto& v) { c.params.svm_c = as_double("svm_c", v); });
    add("append_bias", [](auto& c, const auto& v) { c.params.append_bias = as_bool("append_bias", v); });
    add("glm_intercept", [](auto& c, const auto& v) { c.params.glm_intercept = as_bool("glm_intercept", v); });
    add("hrf_length", [](auto& c, const auto& v) { c.params.hrf_length_seconds = as_double("hrf_length", v); });
    add("hrf.peak_delay", [](auto& c, const auto& v) { c.params.hrf.peak_delay = as_double("hrf.peak_delay", v); });
    add("hrf.undershoot_delay",
        [](auto& c, const auto& v) { c.params.hrf.undershoot_delay = as_double("hrf.undershoot_delay", v); });
    add("hrf.peak_dispersion",
        [](auto& c, const auto& v) { c.params.hrf.peak_dispersion = as_double("hrf.peak_dispersion", v); });
    add("hrf.undershoot_dispersion", [](auto& c, const auto& v) {
      c.params.hrf.undershoot_dispersion = as_double("hrf.undershoot_dispersion", v);
    });
    add("hrf.undershoot_ratio",
        [](auto& c, const auto& v) { c.params.hrf.undershoot_ratio = as_double("hrf.undershoot_ratio", v); });
    add("noise", [](auto& c, const auto& v) {
      if (v == "identity")
        c.params.noise.kind = NoiseModel::Kind::Identity;
      else if (v == "ar1")
        c.params.noise.kind = NoiseModel::Kind::Ar1;
      else
        throw ConfigError("config key 'noise': expected identity or ar1, got '" + v + "'");
    });
    add("noise_rho", [](auto& c, const auto& v) {
      const double rho = as_double("noise_rho", v);
      if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("config key 'noise_rho' must lie in (-1, 1)");
      c.params.noise.rho = rho;
    });
    add("estimate_rho", [](auto& c, const auto& v) { c.params.estimate_rho = as_bool("estimate_rho", v); });
    add("registration", [](auto& c, const auto& v) {
      if (v == "identity")
        c.params.registration.mode = RegistrationConfig::Mode::Identity;
      else if (v == "search")
        c.params.registration.mode = RegistrationConfig::Mode::Search;
      else
        throw ConfigError("config key 'registration': expected identity or search, got '" + v + "'");
    });
    add("translation_range",
        [](auto& c, const auto& v) { c.params.registration.translation_range = int(as_int("translation_range", v)); });
    add("translation_step",
        [](auto& c, const auto& v) { c.params.registration.translation_step = int(as_int("translation_step", v)); });
    add("scales", [](auto& c, const auto& v) { c.params.registration.scales = as_list("scales", v); });
    add("histogram_bins",
        [](auto& c, const auto& v) { c.params.registration.histogram_bins = int(as_int("histogram_bins", v)); });

    add("synth.subjects", [](auto& c, const auto& v) { c.synth.subjects = int(as_int("synth.subjects", v)); });
    add("synth.categories", [](auto& c, const auto& v) { c.synth.categories = int(as_int("synth.categories", v)); });
    add("synth.events",
        [](auto& c, const auto& v) { c.synth.events_per_category = int(as_int("synth.events", v)); });
    add("synth.t", [](auto& c, const auto& v) { c.synth.t = as_int("synth.t", v); });
    add("synth.tr", [](auto& c, const auto& v) { c.synth.tr_seconds = as_double("synth.tr", v); });
    add("synth.dims", [](auto& c, const auto& v) {
      const auto d = as_list("synth.dims", v);
      if (d.size() != 3) throw ConfigError("config key 'synth.dims': expected nx,ny,nz");
      for (double x : d)
        if (!(x >= 1.0 && x == double(std::uint32_t(x))))
          throw ConfigError("config key 'synth.dims': extents must be positive integers");
      c.synth.dims = {std::uint32_t(d[0]), std::uint32_t(d[1]), std::uint32_t(d[2])};
    });
    add("synth.regions", [](auto& c, const auto& v) { c.synth.regions = int(as_int("synth.regions", v)); });
    add("synth.informative",
        [](auto& c, const auto& v) { c.synth.informative_regions = int(as_int("synth.informative", v)); });
    add("synth.amplitude", [](auto& c, const auto& v) { c.synth.amplitude = as_double("synth.amplitude", v); });
    add("synth.noise_std", [](auto& c, const auto& v) { c.synth.noise_std = as_double("synth.noise_std", v); });
    add("synth.ar1_rho", [](auto& c, const auto& v) { c.synth.ar1_rho = as_double("synth.ar1_rho", v); });
    add("synth.design", [](auto& c, const auto& v) {
      if (v == "block")
        c.synth.design = SynthConfig::Design::Block;
      else if (v == "event")
        c.synth.design = SynthConfig::Design::Event;
      else
        throw ConfigError("config key 'synth.design': expected block or event, got '" + v + "'");
    });
    add("synth.block_duration",
        [](auto& c, const auto& v) { c.synth.block_duration = as_int("synth.block_duration", v); });
    add("synth.spacing", [](auto& c, const auto& v) { c.synth.spacing = as_int("synth.spacing", v); });
    add("synth.lead_in", [](auto& c, const auto& v) { c.synth.lead_in = as_int("synth.lead_in", v); });
    add("synth.baseline_mean",
        [](auto& c, const auto& v) { c.synth.baseline_mean = as_double("synth.baseline_mean", v); });
    add("synth.baseline_std",
        [](auto& c, const auto& v) { c.synth.baseline_std = as_double("synth.baseline_std", v); });
    add("synth.native_shift", [](auto& c, const auto& v) {
      const auto s = as_list("synth.native_shift", v);
      if (s.size() != 3) throw ConfigError("config key 'synth.native_shift': expected dx,dy,dz");
      for (int a = 0; a < 3; ++a) {
        if (s[std::size_t(a)] != double(int(s[std::size_t(a)])))
          throw ConfigError("config key 'synth.native_shift': shifts must be integers");
        c.synth.native_shift[a] = int(s[std::size_t(a)]);
      }
    });
    return k;
  }();
  return table;
}

const char* noise_name(NoiseModel::Kind k) { return k == NoiseModel::Kind::Ar1 ? "ar1" : "identity"; }

}  // namespace

std::optional<std::uint64_t> PipelineConfig::shuffle_seed() const {
  if (!shuffle_labels) return std::nullopt;
  return derive_seed(seed, 0x5348);
}

nlohmann::ordered_json PipelineConfig::to_json(bool with_paths) const {
  nlohmann::ordered_json j;
  if (with_paths) {
    j["out"] = out.string();
    j["data_dir"] = data_path().string();
    j["atlas"] = atlas_path().string();
    j["reference"] = reference_path().string();
  }
  j["target"] = target;
  j["seed"] = seed;
  j["shuffle_labels"] = shuffle_labels;
  j["jobs"] = params.jobs;
  j["sigma_g"] = params.sigma_g;
  j["svm_c"] = params.svm_c;
  j["append_bias"] = params.append_bias;
  j["glm_intercept"] = params.glm_intercept;
  j["hrf_length"] = params.hrf_length_seconds;
  j["hrf.peak_delay"] = params.hrf.peak_delay;
  j["hrf.undershoot_delay"] = params.hrf.undershoot_delay;
  j["hrf.peak_dispersion"] = params.hrf.peak_dispersion;
  j["hrf.undershoot_dispersion"] = params.hrf.undershoot_dispersion;
  j["hrf.undershoot_ratio"] = params.hrf.undershoot_ratio;
  j["noise"] = noise_name(params.noise.kind);
  j["noise_rho"] = params.noise.rho;
  j["estimate_rho"] = params.estimate_rho;
  const auto& r = params.registration;
  j["registration"] = r.mode == RegistrationConfig::Mode::Search ? "search" : "identity";
  j["translation_range"] = r.translation_range;
  j["translation_step"] = r.translation_step;
  j["scales"] = r.scales;
  j["histogram_bins"] = r.histogram_bins;
  j["synth.subjects"] = synth.subjects;
  j["synth.categories"] = synth.categories;
  j["synth.events"] = synth.events_per_category;
  j["synth.t"] = synth.t;
  j["synth.tr"] = synth.tr_seconds;
  j["synth.dims"] = {synth.dims.nx, synth.dims.ny, synth.dims.nz};
  j["synth.regions"] = synth.regions;
  j["synth.informative"] = synth.informative_regions;
  j["synth.amplitude"] = synth.amplitude;
  j["synth.noise_std"] = synth.noise_std;
  j["synth.ar1_rho"] = synth.ar1_rho;
  j["synth.design"] = synth.design == SynthConfig::Design::Event ? "event" : "block";
  j["synth.block_duration"] = synth.block_duration;
  j["synth.spacing"] = synth.spacing;
  j["synth.lead_in"] = synth.lead_in;
  j["synth.baseline_mean"] = synth.baseline_mean;
  j["synth.baseline_std"] = synth.baseline_std;
  j["synth.native_shift"] = {synth.native_shift.x(), synth.native_shift.y(), synth.native_shift.z()};
  return j;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);

    // strip comments outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (!line.empty() && line.back() == '\r') line = trim(line.substr(0, line.size() - 1));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    if (!out.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  PipelineConfig cfg;
  for (const auto& [k, v] : parse_key_values(text, path.string())) apply_setting(cfg, k, v);
  return cfg;
}

}  // namespace mrnr

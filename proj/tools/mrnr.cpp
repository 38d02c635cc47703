#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mrnr/config.hpp"
#include "mrnr/errors.hpp"
#include "mrnr/stages.hpp"
#include "mrnr/volume.hpp"

namespace {

int fail(const std::exception& e, const std::string& stage, const std::filesystem::path& out) {
  const auto record = mrnr::error_record(e, stage);
  std::cerr << record.dump() << "\n";
  if (!out.empty()) {
    try {
      std::filesystem::create_directories(out);
      mrnr::write_file_atomic(out / "error.json", record.dump(2) + "\n");
    } catch (...) {
      // the record on stderr is enough when the output directory is unusable
    }
  }
  return mrnr::exit_code_for(e);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-region snapshot decoding of fMRI-style time series"};
  app.set_version_flag("--version", MRNR_VERSION);

  std::string command;
  std::optional<std::string> config, sigma_g, svm_c, target, seed, out, jobs, data;
  app.add_option("command", command, "simulate | design | snapshot | extract | train | evaluate | pipeline")
      ->required()
      ->check(CLI::IsMember({"simulate", "design", "snapshot", "extract", "train", "evaluate", "pipeline"}));
  app.add_option("--config", config, "key = value config file");
  app.add_option("--sigma-g", sigma_g, "design smoothing width in samples (default 1.0)");
  app.add_option("--svm-c", svm_c, "L1-SVM hinge weight C (default 1.0)");
  app.add_option("--target", target, "positive category (default cat0)");
  app.add_option("--seed", seed, "seed for simulation and label shuffling (default 42)");
  app.add_option("--out", out, "output directory (default mrnr_out)");
  app.add_option("--jobs", jobs, "worker threads (default 1)");
  app.add_option("--data", data, "experiment directory (default <out>/data)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(mrnr::ConfigError(e.what()), "cli", {});
  }

  mrnr::PipelineConfig cfg;
  try {
    if (config) cfg = mrnr::load_config(*config);
    // flags override the config file
    const std::pair<const char*, const std::optional<std::string>*> flags[] = {
        {"sigma_g", &sigma_g}, {"svm_c", &svm_c}, {"target", &target}, {"seed", &seed},
        {"out", &out},         {"jobs", &jobs},   {"data_dir", &data}};
    for (const auto& [key, value] : flags)
      if (*value) mrnr::apply_setting(cfg, key, **value);
  } catch (const std::exception& e) {
    return fail(e, "cli", out ? std::filesystem::path(*out) : std::filesystem::path());
  }

  try {
    mrnr::run_stage(command, cfg, std::cout);
    std::error_code ec;
    std::filesystem::remove(cfg.out / "error.json", ec);
  } catch (const std::exception& e) {
    return fail(e, mrnr::active_stage(), cfg.out);
  }
  return 0;
}

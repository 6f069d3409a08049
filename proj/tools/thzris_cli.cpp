// SPDX-License-Identifier: Apache-2.0
// thzris: run experiments, design codebooks, evaluate bounds.

#include <iostream>

#include "CLI11.hpp"
#include "thzris/harness.hpp"

namespace {

using namespace thzris;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

std::filesystem::path parent_of(const std::string& path) { return std::filesystem::absolute(path).parent_path(); }

// Preset, file, or file patched onto a preset.
json load_document(const std::string& file, const std::string& preset_name) {
  json doc = json::object();
  if (!preset_name.empty()) doc = preset(preset_name);
  if (!file.empty()) {
    const json f = read_json(file);
    if (!f.is_object()) throw config_error(file + ": expected an object");
    if (preset_name.empty())
      doc = f;
    else
      doc.merge_patch(f);
  }
  if (file.empty() && preset_name.empty()) throw config_error("give a scenario file or --preset");
  return doc;
}

int simulate(const std::string& file, const std::string& preset_name, const std::string& out, std::optional<std::uint64_t> seed,
             bool full_scale, bool trace) {
  RunOptions ro;
  ro.seed = seed;
  ro.full_scale = full_scale;
  ro.trace = trace;
  const auto results = run_experiment(load_document(file, preset_name), ro, out, file.empty() ? std::filesystem::path{} : parent_of(file));
  for (const auto& v : results) std::cout << (std::filesystem::path(out) / ("results_" + v.name + ".csv")).string() << "\n";
  return 0;
}

int design(const std::string& file, int L, int S, int R, const std::string& out) {
  Scenario sc;
  if (!file.empty()) {
    auto configs = resolve_document(read_json(file), {}, parent_of(file));
    sc = configs.front().second.scenario;
  }
  const Codebook cb = design_codebook(L, S, R, sc);
  save_codebook(cb, out);
  int unconverged = 0;
  for (const auto& st : cb.stages)
    for (const auto& cw : st) unconverged += cw.converged ? 0 : 1;
  std::cout << "wrote " << cb.size() << " codewords to " << out;
  if (unconverged) std::cout << " (" << unconverged << " hit the iteration cap)";
  std::cout << "\n";
  return 0;
}

int bounds(const std::string& file, const std::string& out) {
  std::ofstream csv(out);
  if (!csv) throw std::runtime_error("cannot write " + out);
  csv << "snr_db,peb_m\n";
  const auto configs = resolve_document(read_json(file), {}, parent_of(file));
  const ExperimentConfig& c = configs.front().second;
  for (double snr : c.snr_db) {
    Scenario sc = c.scenario;
    sc.snr_db = snr;
    std::vector<std::vector<double>> rcs;
    for (const auto& t : sc.targets)
      rcs.push_back(t.rcs.empty() ? std::vector<double>(std::size_t(sc.n_bins()), std::sqrt(sc.rcs_variance)) : t.rcs);
    const BoundsReport r = position_error_bound(sc, rcs, refinement_shots(sc, c.refinement));
    csv << format_number(snr) << "," << format_number(r.peb) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS-aided THz radar localization simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string sim_file, sim_preset, sim_out = "out";
  std::uint64_t sim_seed = 0;
  bool sim_full = false, sim_trace = false;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  sim->add_option("scenario", sim_file, "Scenario JSON (patches the preset when both are given)")->check(CLI::ExistingFile);
  std::string names;
  for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
  sim->add_option("--preset", sim_preset, "Built-in experiment: " + names);
  sim->add_option("--out", sim_out, "Output directory")->capture_default_str();
  auto* seed_opt = sim->add_option("--seed", sim_seed, "Override the master seed");
  sim->add_flag("--full-scale", sim_full, "Apply the full_scale patch");
  sim->add_flag("--trace", sim_trace, "Write per-trial scan traces");

  std::string cb_file, cb_out = "codebook.json";
  int cb_L = 5, cb_S = 3, cb_R = 0;
  auto* dcb = app.add_subcommand("design-codebook", "Design a hierarchical codebook and save it as JSON");
  dcb->add_option("scenario", cb_file, "Scenario JSON for the array and geometry")->check(CLI::ExistingFile);
  dcb->add_option("--L", cb_L, "Sectors per stage")->capture_default_str();
  dcb->add_option("--S", cb_S, "Stages")->capture_default_str();
  dcb->add_option("--R", cb_R, "Design grid size (0 selects 2 L^S)")->capture_default_str();
  dcb->add_option("--out", cb_out, "Output file")->capture_default_str();

  std::string b_file, b_out = "bounds.csv";
  auto* bnd = app.add_subcommand("bounds", "Position error bound per SNR at nominal RCS");
  bnd->add_option("scenario", b_file, "Scenario JSON")->required()->check(CLI::ExistingFile);
  bnd->add_option("--out", b_out, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) return simulate(sim_file, sim_preset, sim_out, *seed_opt ? std::optional<std::uint64_t>(sim_seed) : std::nullopt, sim_full, sim_trace);
    if (*dcb) return design(cb_file, cb_L, cb_S, cb_R, cb_out);
    if (*bnd) return bounds(b_file, b_out);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mle_refine.hpp"

namespace thzris {

using nlohmann::json;

struct ExperimentConfig {
  std::string name = "scenario";
  Scenario scenario;
  std::vector<double> snr_db{30.0};
  int trials = 20;
  std::uint64_t seed = 1;
  int threads = 1;

  int L = 5, S = 3, R = 0;
  std::string codebook_file;  // empty: design on demand

  ScanOptions scan;
  bool full_scan = false;

  bool refine = true;
  RefinementConfig refinement;

  double match_gate = 0.5;  // meters
  bool effective_noise = false;
};

struct Variant {
  std::string name;
  json patch;
};

namespace detail {

// Strict field access with the dotted path in every message.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(where() + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw config_error(field(it.key()) + ": unknown field");
  }

  bool has(const char* k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  const json& raw(const char* k) const { return j_.at(k); }
  std::string field(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  double num(const char* k, double def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number()) throw config_error(field(k) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw config_error(field(k) + ": must be finite");
    return x;
  }
  int integer(const char* k, int def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_integer()) throw config_error(field(k) + ": expected an integer");
    return v.get<int>();
  }
  bool flag(const char* k, bool def) const {
    if (!has(k)) return def;
    if (!j_.at(k).is_boolean()) throw config_error(field(k) + ": expected true or false");
    return j_.at(k).get<bool>();
  }
  std::string str(const char* k, const std::string& def) const {
    if (!has(k)) return def;
    if (!j_.at(k).is_string()) throw config_error(field(k) + ": expected a string");
    return j_.at(k).get<std::string>();
  }
  Point2 point(const char* k, Point2 def) const {
    if (!has(k)) return def;
    return to_point(j_.at(k), field(k));
  }
  std::vector<double> numbers(const char* k, std::vector<double> def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_array()) throw config_error(field(k) + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw config_error(field(k) + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  Reader sub(const char* k) const { return Reader(j_.at(k), field(k)); }

  static Point2 to_point(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw config_error(where + ": expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
};

inline json point_json(const Point2& p) { return json::array({p.x, p.y}); }

}  // namespace detail

// Parses one resolved experiment (variants and full_scale already applied).
// Relative file references resolve against base_dir.
inline ExperimentConfig parse_experiment(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::Reader;
  ExperimentConfig c;
  Scenario& sc = c.scenario;
  const Reader root(j, "");
  root.allow({"name", "geometry", "arrays", "frequency", "absorption", "noise", "power", "rcs_variance", "receiver", "codebook",
              "scan", "refinement", "switches", "metrics", "trials", "seed", "threads", "variants", "full_scale"});
  c.name = root.str("name", c.name);
  if (root.has("geometry")) {
    const Reader g = root.sub("geometry");
    g.allow({"p_tx", "p_ris", "p_rx", "blockage", "targets"});
    sc.p_tx = g.point("p_tx", sc.p_tx);
    sc.p_ris = g.point("p_ris", sc.p_ris);
    sc.p_rx = g.point("p_rx", sc.p_rx);
    if (g.has("blockage")) {
      const Reader b = g.sub("blockage");
      b.allow({"base", "tip"});
      if (!b.has("base") || !b.has("tip")) throw config_error("geometry.blockage: needs base and tip");
      sc.blockage = BlockageSegment{b.point("base", {}), b.point("tip", {})};
    } else if (g.raw("blockage").is_null()) {
      sc.blockage.reset();
    }
    if (g.has("targets")) {
      const json& t = g.raw("targets");
      if (!t.is_array()) throw config_error("geometry.targets: expected an array");
      for (std::size_t i = 0; i < t.size(); ++i) {
        const Reader tr(t[i], "geometry.targets[" + std::to_string(i) + "]");
        tr.allow({"position", "rcs"});
        if (!tr.has("position")) throw config_error(tr.field("position") + ": required");
        sc.targets.push_back({tr.point("position", {}), tr.numbers("rcs", {})});
      }
    }
  }
  if (root.has("arrays")) {
    const Reader a = root.sub("arrays");
    a.allow({"n_tx", "n_ris", "n_rx", "spacing"});
    sc.n_tx = a.integer("n_tx", sc.n_tx);
    sc.n_ris = a.integer("n_ris", sc.n_ris);
    sc.n_rx = a.integer("n_rx", sc.n_rx);
    sc.spacing = a.num("spacing", sc.spacing);
  }
  if (root.has("frequency")) {
    const Reader f = root.sub("frequency");
    f.allow({"fc", "bandwidth", "subbands", "subband_bandwidth"});
    sc.grid.fc = f.num("fc", sc.grid.fc);
    sc.grid.total_bandwidth = f.num("bandwidth", sc.grid.total_bandwidth);
    sc.grid.n_subbands = f.integer("subbands", sc.grid.n_subbands);
    sc.grid.subband_bandwidth = f.num("subband_bandwidth", sc.grid.subband_bandwidth);
  }
  if (root.has("absorption")) {
    const Reader a = root.sub("absorption");
    a.allow({"kappa", "table"});
    if (a.has("kappa") && a.has("table")) throw config_error("absorption: give either kappa or table");
    if (a.has("table") && a.raw("table").is_object()) {
      const Reader t = a.sub("table");
      t.allow({"frequency_hz", "kappa_per_m"});
      sc.absorption = AbsorptionModel::table(t.numbers("frequency_hz", {}), t.numbers("kappa_per_m", {}));
    } else if (a.has("table")) {
      std::filesystem::path p = a.str("table", "");
      if (p.is_relative()) p = base_dir / p;
      sc.absorption = AbsorptionModel::load_csv(p.string());
    } else {
      sc.absorption = AbsorptionModel::constant(a.num("kappa", 0.0));
    }
  }
  if (root.has("noise")) {
    const Reader n = root.sub("noise");
    n.allow({"n0", "bandwidth", "enabled"});
    sc.n0 = n.num("n0", sc.n0);
    sc.noise_bandwidth = n.num("bandwidth", sc.noise_bandwidth);
    sc.noise = n.flag("enabled", sc.noise);
  }
  if (root.has("power")) {
    const Reader p = root.sub("power");
    p.allow({"snr_db", "reference", "reference_point"});
    c.snr_db = p.numbers("snr_db", c.snr_db);
    const std::string ref = p.str("reference", "echo");
    if (ref == "echo")
      sc.snr_reference = SnrReference::echo;
    else if (ref == "transmit")
      sc.snr_reference = SnrReference::transmit;
    else
      throw config_error("power.reference: expected \"echo\" or \"transmit\"");
    sc.snr_reference_point = p.point("reference_point", sc.snr_reference_point);
  }
  sc.rcs_variance = root.num("rcs_variance", sc.rcs_variance);
  if (root.has("receiver")) {
    const Reader r = root.sub("receiver");
    r.allow({"rx_res", "snapshots", "estimator", "music_sources", "gamma"});
    sc.rx_res = r.integer("rx_res", sc.rx_res);
    sc.snapshots = r.integer("snapshots", sc.snapshots);
    const std::string est = r.str("estimator", "conventional");
    if (est == "conventional")
      c.scan.doa.estimator = Estimator::conventional;
    else if (est == "music")
      c.scan.doa.estimator = Estimator::music;
    else
      throw config_error("receiver.estimator: expected \"conventional\" or \"music\"");
    c.scan.doa.music_sources = r.integer("music_sources", 0);
    c.scan.doa.gamma = r.num("gamma", c.scan.doa.gamma);
  }
  if (root.has("codebook")) {
    const Reader b = root.sub("codebook");
    b.allow({"L", "S", "R", "file"});
    c.L = b.integer("L", c.L);
    c.S = b.integer("S", c.S);
    c.R = b.integer("R", c.R);
    c.codebook_file = b.str("file", "");
    if (!c.codebook_file.empty()) {
      std::filesystem::path p = c.codebook_file;
      if (p.is_relative()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw config_error("codebook.file: no such file: " + p.string());
      c.codebook_file = p.string();
    }
  }
  if (root.has("scan")) {
    const Reader s = root.sub("scan");
    s.allow({"mode", "dedup_radius"});
    const std::string mode = s.str("mode", "hcb");
    if (mode != "hcb" && mode != "full") throw config_error("scan.mode: expected \"hcb\" or \"full\"");
    c.full_scan = mode == "full";
    c.scan.dedup_radius = s.num("dedup_radius", c.scan.dedup_radius);
  }
  if (root.has("refinement")) {
    const Reader r = root.sub("refinement");
    r.allow({"enabled", "extra_transmissions", "theta_half_width", "phi_half_width", "tol", "max_iterations"});
    c.refine = r.flag("enabled", c.refine);
    c.refinement.extra_transmissions = r.integer("extra_transmissions", c.refinement.extra_transmissions);
    c.refinement.theta_half_width = r.num("theta_half_width", c.refinement.theta_half_width);
    c.refinement.phi_half_width = r.num("phi_half_width", c.refinement.phi_half_width);
    c.refinement.tol = r.num("tol", c.refinement.tol);
    c.refinement.max_iterations = r.integer("max_iterations", c.refinement.max_iterations);
  }
  if (root.has("switches")) {
    const Reader s = root.sub("switches");
    s.allow({"diffraction_path1", "diffraction_path2", "reradiation", "subtraction", "path2_depth"});
    sc.diffraction_path1 = s.flag("diffraction_path1", sc.diffraction_path1);
    sc.diffraction_path2 = s.flag("diffraction_path2", sc.diffraction_path2);
    sc.reradiation = s.flag("reradiation", sc.reradiation);
    sc.subtraction = s.flag("subtraction", sc.subtraction);
    const std::string d = s.str("path2_depth", "absolute");
    if (d == "absolute")
      sc.path2_depth = DepthSign::absolute_depth;
    else if (d == "signed")
      sc.path2_depth = DepthSign::signed_depth;
    else
      throw config_error("switches.path2_depth: expected \"absolute\" or \"signed\"");
  }
  if (root.has("metrics")) {
    const Reader m = root.sub("metrics");
    m.allow({"match_gate", "effective_noise"});
    c.match_gate = m.num("match_gate", c.match_gate);
    c.effective_noise = m.flag("effective_noise", c.effective_noise);
  }
  c.trials = root.integer("trials", c.trials);
  if (root.has("seed")) {
    const json& s = root.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) throw config_error("seed: expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.threads = root.integer("threads", c.threads);

  if (sc.targets.empty()) throw config_error("geometry.targets: at least one target is required");
  if (c.trials < 1) throw config_error("trials: must be at least 1");
  if (c.threads < 1) throw config_error("threads: must be at least 1");
  if (c.snr_db.empty()) throw config_error("power.snr_db: at least one value is required");
  if (!(c.scan.doa.gamma > 0.0 && c.scan.doa.gamma < 1.0)) throw config_error("receiver.gamma: must lie in (0, 1)");
  if (!(c.match_gate > 0.0)) throw config_error("metrics.match_gate: must be positive");
  if (c.refine && c.refinement.extra_transmissions < 1) throw config_error("refinement.extra_transmissions: must be at least 1");
  if (!(c.refinement.tol > 0.0)) throw config_error("refinement.tol: must be positive");
  if (c.refinement.max_iterations < 1) throw config_error("refinement.max_iterations: must be at least 1");
  check_codebook_shape(c.L, c.S, c.R > 0 ? c.R : default_grid_size(c.L, c.S));
  sc.validate();
  return c;
}

// Fully explicit form of a parsed experiment; parsing it again gives the same
// configuration.
inline json experiment_to_json(const ExperimentConfig& c) {
  using detail::point_json;
  const Scenario& sc = c.scenario;
  json targets = json::array();
  for (const auto& t : sc.targets) {
    json tj{{"position", point_json(t.position)}};
    if (!t.rcs.empty()) tj["rcs"] = t.rcs;
    targets.push_back(tj);
  }
  json blk = nullptr;
  if (sc.blockage) blk = {{"base", point_json(sc.blockage->base)}, {"tip", point_json(sc.blockage->tip)}};
  json absorption;
  if (!sc.absorption.freqs.empty())
    absorption = {{"table", {{"frequency_hz", sc.absorption.freqs}, {"kappa_per_m", sc.absorption.kappas}}}};
  else
    absorption = {{"kappa", sc.absorption.constant_kappa}};
  json j{
      {"name", c.name},
      {"geometry", {{"p_tx", point_json(sc.p_tx)}, {"p_ris", point_json(sc.p_ris)}, {"p_rx", point_json(sc.p_rx)}, {"blockage", blk}, {"targets", targets}}},
      {"arrays", {{"n_tx", sc.n_tx}, {"n_ris", sc.n_ris}, {"n_rx", sc.n_rx}, {"spacing", sc.spacing}}},
      {"frequency",
       {{"fc", sc.grid.fc}, {"bandwidth", sc.grid.total_bandwidth}, {"subbands", sc.grid.n_subbands}, {"subband_bandwidth", sc.grid.subband_bandwidth}}},
      {"noise", {{"n0", sc.n0}, {"bandwidth", sc.noise_bandwidth}, {"enabled", sc.noise}}},
      {"power",
       {{"snr_db", c.snr_db},
        {"reference", sc.snr_reference == SnrReference::echo ? "echo" : "transmit"},
        {"reference_point", point_json(sc.snr_reference_point)}}},
      {"rcs_variance", sc.rcs_variance},
      {"receiver",
       {{"rx_res", sc.rx_res},
        {"snapshots", sc.snapshots},
        {"estimator", c.scan.doa.estimator == Estimator::music ? "music" : "conventional"},
        {"music_sources", c.scan.doa.music_sources},
        {"gamma", c.scan.doa.gamma}}},
      {"codebook", {{"L", c.L}, {"S", c.S}, {"R", c.R}}},
      {"scan", {{"mode", c.full_scan ? "full" : "hcb"}, {"dedup_radius", c.scan.dedup_radius}}},
      {"refinement",
       {{"enabled", c.refine},
        {"extra_transmissions", c.refinement.extra_transmissions},
        {"theta_half_width", c.refinement.theta_half_width},
        {"phi_half_width", c.refinement.phi_half_width},
        {"tol", c.refinement.tol},
        {"max_iterations", c.refinement.max_iterations}}},
      {"switches",
       {{"diffraction_path1", sc.diffraction_path1},
        {"diffraction_path2", sc.diffraction_path2},
        {"reradiation", sc.reradiation},
        {"subtraction", sc.subtraction},
        {"path2_depth", sc.path2_depth == DepthSign::absolute_depth ? "absolute" : "signed"}}},
      {"metrics", {{"match_gate", c.match_gate}, {"effective_noise", c.effective_noise}}},
      {"trials", c.trials},
      {"seed", c.seed},
      {"threads", c.threads}};
  if (!c.codebook_file.empty()) j["codebook"]["file"] = c.codebook_file;
  j["absorption"] = absorption;
  return j;
}

// Splits a scenario document into its base and named variants. With
// full_scale the document's "full_scale" patch is merged first.
inline std::vector<std::pair<std::string, json>> expand_variants(json doc, bool full_scale) {
  if (!doc.is_object()) throw config_error("<root>: expected an object");
  json fs = doc.contains("full_scale") ? doc["full_scale"] : json::object();
  json variants = doc.contains("variants") ? doc["variants"] : json::array();
  doc.erase("full_scale");
  doc.erase("variants");
  if (full_scale) {
    if (!fs.is_object()) throw config_error("full_scale: expected an object");
    doc.merge_patch(fs);
  }
  std::vector<std::pair<std::string, json>> out;
  if (!variants.is_array()) throw config_error("variants: expected an array");
  if (variants.empty()) {
    out.emplace_back("default", doc);
    return out;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string where = "variants[" + std::to_string(i) + "]";
    const json& v = variants[i];
    if (!v.is_object() || !v.contains("name") || !v["name"].is_string()) throw config_error(where + ": needs a string name");
    for (auto it = v.begin(); it != v.end(); ++it)
      if (it.key() != "name" && it.key() != "patch") throw config_error(where + "." + it.key() + ": unknown field");
    const std::string name = v["name"].get<std::string>();
    if (name.empty() || name.find_first_of("/\\ ") != std::string::npos) throw config_error(where + ".name: must be a plain word");
    if (!seen.insert(name).second) throw config_error(where + ".name: duplicate variant " + name);
    json d = doc;
    if (v.contains("patch")) {
      if (!v["patch"].is_object()) throw config_error(where + ".patch: expected an object");
      d.merge_patch(v["patch"]);
    }
    out.emplace_back(name, d);
  }
  return out;
}

// Built-in experiments at desk scale.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"diffraction", "gamma-tradeoff", "single-target", "multi-target", "multiband"};
  return names;
}

inline json preset_base() {
  return R"({
    "geometry": {
      "p_tx": [2.0, 1.0], "p_ris": [3.25, 0.25], "p_rx": [6.75, 0.25],
      "blockage": {"base": [5.0, 0.0], "tip": [5.0, 1.875]},
      "targets": [{"position": [5.25, 3.75]}]
    },
    "arrays": {"n_tx": 64, "n_ris": 16, "n_rx": 16},
    "frequency": {"fc": 300e9, "bandwidth": 5e9, "subbands": 4, "subband_bandwidth": 10e6},
    "absorption": {"kappa": 0.0},
    "noise": {"n0": 3.981071705534972e-15},
    "power": {"reference": "echo", "reference_point": [5.25, 3.75]},
    "receiver": {"rx_res": 180, "snapshots": 10, "gamma": 0.3},
    "codebook": {"L": 5, "S": 3},
    "switches": {"diffraction_path1": true, "diffraction_path2": true, "reradiation": true, "subtraction": true,
                 "path2_depth": "absolute"},
    "refinement": {"enabled": true, "extra_transmissions": 3},
    "seed": 1,
    "full_scale": {"arrays": {"n_tx": 256, "n_ris": 64, "n_rx": 128}, "trials": 100}
  })"_json;
}

inline json preset(const std::string& name) {
  json j = preset_base();
  j["name"] = name;
  if (name == "diffraction") {
    j.merge_patch(R"({
      "codebook": {"L": 7, "S": 3},
      "power": {"snr_db": [-20, -10, 0, 10, 20, 30]},
      "refinement": {"enabled": false},
      "trials": 20,
      "variants": [
        {"name": "compensated", "patch": {"switches": {"subtraction": true}}},
        {"name": "uncompensated", "patch": {"switches": {"subtraction": false}}}
      ]
    })"_json);
  } else if (name == "gamma-tradeoff") {
    j.merge_patch(R"({
      "power": {"snr_db": [-10, -5, 0, 5, 10, 20]},
      "refinement": {"enabled": false},
      "trials": 20,
      "variants": [
        {"name": "gamma_0.1", "patch": {"receiver": {"gamma": 0.1}}},
        {"name": "gamma_0.3", "patch": {"receiver": {"gamma": 0.3}}},
        {"name": "gamma_0.5", "patch": {"receiver": {"gamma": 0.5}}},
        {"name": "gamma_0.7", "patch": {"receiver": {"gamma": 0.7}}},
        {"name": "full_scan", "patch": {"scan": {"mode": "full"}}}
      ]
    })"_json);
  } else if (name == "single-target") {
    j.merge_patch(R"({
      "power": {"snr_db": [-10, 0, 10, 20, 30]},
      "trials": 20,
      "variants": [
        {"name": "L5_S3", "patch": {"codebook": {"L": 5, "S": 3}}},
        {"name": "L7_S3", "patch": {"codebook": {"L": 7, "S": 3}}}
      ]
    })"_json);
  } else if (name == "multi-target") {
    j.merge_patch(R"({
      "geometry": {"targets": [{"position": [4.0, 4.0]}, {"position": [5.0, 4.0]}, {"position": [6.0, 4.0]}]},
      "power": {"snr_db": [0, 10, 20, 30], "reference_point": [5.0, 4.0]},
      "trials": 10
    })"_json);
  } else if (name == "multiband") {
    j.merge_patch(R"({
      "power": {"snr_db": [0, 5, 10]},
      "trials": 50,
      "variants": [
        {"name": "M4", "patch": {"frequency": {"subbands": 4}}},
        {"name": "M1", "patch": {"frequency": {"subbands": 1}}}
      ]
    })"_json);
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw config_error("unknown preset '" + name + "' (available: " + list + ")");
  }
  return j;
}

}  // namespace thzris

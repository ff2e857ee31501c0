#pragma once
// Experiment configuration: one JSON document per run.

#include "paralab/harness/io.hpp"

namespace paralab::harness {

using io::json;

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "oracle",   "quadratic",     "calderon",     "offdiag",  "conservation", "carleson",     "para_l2",
      "para_identity", "para_offdiag", "leibniz", "tent_duality", "molecules", "determinism"};
  return names;
}

inline bool known_suite(const std::string& s) {
  const auto& n = suite_names();
  return std::find(n.begin(), n.end(), s) != n.end();
}

struct ExperimentConfig {
  std::string suite;
  std::uint64_t seed = 1;
  int trials = 20;
  std::vector<io::CaseDesc> cases;
  json psi;        // descriptor; empty means exp_monomial(1)
  json psi_tilde;  // descriptor; empty means psi, then normalized against psi
  io::TGridDesc tgrid;
  int contour_q = 0;
  json tolerances = json::object();
  json params = json::object();
  std::string out_dir = "out";
  std::optional<std::string> cache_dir;

  double tol(const char* key, double fallback) const { return io::get_or(tolerances, key, fallback); }

  template <class T>
  T param(const char* key, T fallback) const {
    return io::get_or(params, key, fallback);
  }

  PsiFunction make_psi() const {
    return psi.is_null() ? PsiFunction::exp_monomial(1) : io::psi_from(psi);
  }

  /// psi~ rescaled so that the pair satisfies the reproducing normalization.
  PsiFunction make_psi_tilde() const {
    const PsiFunction p = make_psi();
    return normalize_pair(p, psi_tilde.is_null() ? p : io::psi_from(psi_tilde));
  }

  ContourOptions contour() const {
    ContourOptions c;
    c.q = contour_q;
    return c;
  }
};

inline json to_json(const ExperimentConfig& c) {
  json cases = json::array();
  for (const auto& k : c.cases) cases.push_back(io::to_json(k));
  json j{{"suite", c.suite},          {"seed", c.seed},           {"trials", c.trials},
         {"cases", cases},            {"tgrid", io::to_json(c.tgrid)}, {"contour_q", c.contour_q},
         {"tolerances", c.tolerances}, {"params", c.params},        {"out", c.out_dir}};
  if (!c.psi.is_null()) j["psi"] = c.psi;
  if (!c.psi_tilde.is_null()) j["psi_tilde"] = c.psi_tilde;
  if (c.cache_dir) j["cache_dir"] = *c.cache_dir;
  return j;
}

/// Validates and reads a configuration; InvalidArgument names the offending field.
inline ExperimentConfig parse_config(const json& j) {
  io::require_keys(j, {"suite", "seed", "trials", "cases", "psi", "psi_tilde", "tgrid", "contour_q", "tolerances",
                       "params", "out", "cache_dir"},
                   "config");
  ExperimentConfig c;
  if (!j.contains("suite")) throw InvalidArgument("config: missing \"suite\"");
  c.suite = j.at("suite").get<std::string>();
  if (!known_suite(c.suite)) throw InvalidArgument("config: unknown suite \"" + c.suite + "\"");
  c.seed = io::get_or<std::uint64_t>(j, "seed", 1);
  c.trials = io::get_or(j, "trials", 20);
  if (c.trials < 1) throw InvalidArgument("config: trials must be >= 1");
  if (j.contains("cases")) {
    for (const auto& k : j.at("cases")) c.cases.push_back(io::case_from(k));
  }
  if (c.cases.empty() && c.suite != "determinism") throw InvalidArgument("config: at least one case is required");
  if (j.contains("psi")) {
    c.psi = j.at("psi");
    io::psi_from(c.psi);
  }
  if (j.contains("psi_tilde")) {
    c.psi_tilde = j.at("psi_tilde");
    io::psi_from(c.psi_tilde);
  }
  if (j.contains("tgrid")) c.tgrid = io::tgrid_from(j.at("tgrid"));
  c.contour_q = io::get_or(j, "contour_q", 0);
  if (j.contains("tolerances")) {
    if (!j.at("tolerances").is_object()) throw InvalidArgument("config: tolerances must be an object");
    c.tolerances = j.at("tolerances");
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw InvalidArgument("config: params must be an object");
    c.params = j.at("params");
  }
  c.out_dir = io::get_or<std::string>(j, "out", "out");
  if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    const auto bytes = io::read_bytes(path);
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

/// Hash of everything that affects results; output and cache paths do not.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("out");
  j.erase("cache_dir");
  return io::hex64(io::fnv1a(j.dump()));
}

}  // namespace paralab::harness

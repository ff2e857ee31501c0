#pragma once
// Descriptors and serialization: JSON for spaces, operators, psi-functions,
// grids, molecules and paraproduct specs; binary blocks for fields and the
// dense oracle cache.

#include "paralab/paraproduct.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace paralab::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("expected [re, im], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

/// Point functions as [[re, im], ...] in index order.
inline json vector_json(const CVector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(complex_json(v[i]));
  return a;
}

inline CVector vector_from(const json& j) {
  CVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = complex_from(j[i]);
  return v;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

/// Rejects keys outside `allowed`; `what` names the object in the message.
inline void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw InvalidArgument(what + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw InvalidArgument(what + ": unknown key \"" + k + "\"");
  }
}

// ---------------------------------------------------------------------------
// space and operator descriptors

struct SpaceDesc {
  std::vector<int> dims{64};
  Topology topology = Topology::periodic;
  double length = 1.0;  // spacing = length / dims[0] unless given
  std::optional<double> spacing;

  double step() const { return spacing ? *spacing : length / dims.at(0); }
};

inline json to_json(const SpaceDesc& d) {
  json j{{"dims", d.dims}, {"topology", to_string(d.topology)}, {"spacing", d.step()}};
  return j;
}

inline SpaceDesc space_from(const json& j) {
  require_keys(j, {"dims", "topology", "length", "spacing"}, "space");
  SpaceDesc d;
  d.dims = j.at("dims").get<std::vector<int>>();
  if (d.dims.empty()) throw InvalidArgument("space: empty dims");
  const auto topo = get_or<std::string>(j, "topology", "periodic");
  if (topo == "periodic") d.topology = Topology::periodic;
  else if (topo == "bounded") d.topology = Topology::bounded;
  else throw InvalidArgument("space: unknown topology \"" + topo + "\"");
  d.length = get_or(j, "length", 1.0);
  if (j.contains("spacing")) d.spacing = j.at("spacing").get<double>();
  return d;
}

struct OperatorDesc {
  std::string coefficients = "uniform";  // uniform | random
  Complex value = 1.0;
  double delta = 0.3;
  double slope = 0.0;
  std::uint64_t seed = 1;
  int power = 1;
};

inline json to_json(const OperatorDesc& d) {
  json j{{"coefficients", d.coefficients}, {"power", d.power}};
  if (d.coefficients == "uniform") {
    j["value"] = complex_json(d.value);
  } else {
    j["delta"] = d.delta;
    j["slope"] = d.slope;
    j["seed"] = d.seed;
  }
  return j;
}

inline OperatorDesc operator_from(const json& j) {
  require_keys(j, {"coefficients", "value", "delta", "slope", "seed", "power"}, "operator");
  OperatorDesc d;
  d.coefficients = get_or<std::string>(j, "coefficients", "uniform");
  if (d.coefficients != "uniform" && d.coefficients != "random") {
    throw InvalidArgument("operator: unknown coefficients \"" + d.coefficients + "\"");
  }
  if (j.contains("value")) d.value = complex_from(j.at("value"));
  d.delta = get_or(j, "delta", 0.3);
  d.slope = get_or(j, "slope", 0.0);
  d.seed = get_or<std::uint64_t>(j, "seed", 1);
  d.power = get_or(j, "power", 1);
  return d;
}

struct CaseDesc {
  SpaceDesc space;
  OperatorDesc op;
};

inline json to_json(const CaseDesc& c) { return {{"space", to_json(c.space)}, {"operator", to_json(c.op)}}; }

inline CaseDesc case_from(const json& j) {
  require_keys(j, {"space", "operator"}, "case");
  return {space_from(j.at("space")), j.contains("operator") ? operator_from(j.at("operator")) : OperatorDesc{}};
}

/// Same case with every dimension scaled so that dims[0] = n (spacing follows).
inline CaseDesc resized(const CaseDesc& c, int n) {
  CaseDesc out = c;
  const double f = double(n) / c.space.dims.at(0);
  for (int& d : out.space.dims) d = std::max(1, static_cast<int>(std::lround(d * f)));
  out.space.dims[0] = n;
  if (out.space.spacing) out.space.spacing = *c.space.spacing / f;
  return out;
}

inline OperatorPtr build_operator(const CaseDesc& c) {
  auto sp = build_grid_space(c.space.dims, c.space.step(), c.space.topology);
  const Boundary bd = c.space.topology == Topology::periodic ? Boundary::periodic : Boundary::dirichlet;
  OperatorPtr op;
  if (c.op.coefficients == "uniform") {
    op = build_divergence_form(sp, c.op.value, bd);
  } else {
    const auto edges = grid_edges(*sp, bd).size();
    op = build_divergence_form(sp, CoefficientField::random(edges, c.op.delta, c.op.slope, c.op.seed), bd);
  }
  return c.op.power == 1 ? op : operator_power(*op, c.op.power);
}

// ---------------------------------------------------------------------------
// psi-functions and grids

inline json to_json(const PsiFunction& p) {
  return {{"family", p.family()}, {"scale", complex_json(p.scale())}, {"power", p.power()},
          {"kappa", p.kappa()}, {"pole", p.pole()}};
}

/// {"family": "exp_monomial", "a": 1} | {"family": "rational", "a": 2, "b": 2}
/// | the full form written by to_json.
inline PsiFunction psi_from(const json& j) {
  require_keys(j, {"family", "a", "b", "scale", "power", "kappa", "pole"}, "psi");
  const auto fam = j.at("family").get<std::string>();
  if (j.contains("power")) {
    return {j.contains("scale") ? complex_from(j.at("scale")) : Complex(1.0), j.at("power").get<double>(),
            get_or(j, "kappa", 0.0), get_or(j, "pole", 0.0), fam};
  }
  PsiFunction p;
  if (fam == "exp_monomial") p = PsiFunction::exp_monomial(j.at("a").get<double>());
  else if (fam == "rational") p = PsiFunction::rational(j.at("a").get<double>(), j.at("b").get<double>());
  else throw InvalidArgument("psi: unknown family \"" + fam + "\"");
  return j.contains("scale") ? p.scaled(complex_from(j.at("scale"))) : p;
}

/// Either explicit {"delta", "R", "q"} or spectral {"q", "lo", "hi"}: t^{2m}|lambda|
/// covering [lo, hi] over the nonzero spectrum of the operator.
struct TGridDesc {
  int q = 8;
  double lo = 1e-4;
  double hi = 40.0;
  std::optional<double> delta, R;

  TGrid resolve(const SectorialOperator& op) const {
    if (delta && R) return {*delta, *R, q};
    return default_tgrid(op, q, lo, hi);
  }
};

inline json to_json(const TGridDesc& d) {
  if (d.delta && d.R) return {{"delta", *d.delta}, {"R", *d.R}, {"q", d.q}};
  return {{"q", d.q}, {"lo", d.lo}, {"hi", d.hi}};
}

inline TGridDesc tgrid_from(const json& j) {
  require_keys(j, {"q", "lo", "hi", "delta", "R"}, "tgrid");
  TGridDesc d;
  d.q = get_or(j, "q", 8);
  d.lo = get_or(j, "lo", 1e-4);
  d.hi = get_or(j, "hi", 40.0);
  if (j.contains("delta") != j.contains("R")) throw InvalidArgument("tgrid: delta and R go together");
  if (j.contains("delta")) {
    d.delta = j.at("delta").get<double>();
    d.R = j.at("R").get<double>();
  }
  if (d.q < 1) throw InvalidArgument("tgrid: q must be >= 1");
  return d;
}

inline json to_json(const TGrid& g) {
  return {{"delta", g.delta()}, {"R", g.R()}, {"q", g.q()}, {"nodes", g.size()}};
}

inline json to_json(const ParaproductSpec& s) {
  return {{"psi", to_json(s.psi)},
          {"psi_tilde", to_json(s.psi_tilde)},
          {"tgrid", to_json(s.grid)},
          {"averaging", s.averaging},
          {"hypotheses",
           {{"critical", s.hypotheses.critical},
            {"l2", s.hypotheses.l2},
            {"lp_hp", s.hypotheses.lp_hp},
            {"hp_l1", s.hypotheses.hp_l1},
            {"warnings", s.hypotheses.warnings}}}};
}

inline json to_json(const Molecule& m) {
  json ratios = json::array();
  for (Eigen::Index k = 0; k < m.ratios.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.ratios.cols(); ++j) row.push_back(m.ratios(k, j));
    ratios.push_back(row);
  }
  return {{"ball", {{"center", m.ball.center}, {"radius", m.ball.radius}}},
          {"M", m.M},
          {"eps", m.eps},
          {"ratios", ratios},
          {"witness", vector_json(m.b)},
          {"valid", m.valid}};
}

/// Rebuilds a molecule from its witness and re-checks it against op.
inline Molecule molecule_from(const SectorialOperator& op, const json& j) {
  const Ball ball{j.at("ball").at("center").get<std::size_t>(), j.at("ball").at("radius").get<double>()};
  const CVector b = vector_from(j.at("witness"));
  CVector m = b;
  const int M = j.at("M").get<int>();
  for (int k = 0; k < M; ++k) m = op.apply(m);
  return molecule_check(op, m, b, ball, M, j.at("eps").get<double>());
}

// ---------------------------------------------------------------------------
// binary blocks

inline void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw Error("write failed: " + path.string());
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

/// N x K complex values, one contiguous block of N per t index, plus a
/// sidecar `<path>.json` with shape and grid.
inline void write_field(const fs::path& path, const FieldFunction& F) {
  const CMatrix& v = F.values;  // column-major: column k is the block for t_k
  write_bytes(path, v.data(), static_cast<std::size_t>(v.size()) * sizeof(Complex));
  const json side{{"rows", v.rows()}, {"cols", v.cols()}, {"dtype", "complex128"}, {"layout", "t-major"},
                  {"tgrid", to_json(F.grid)}};
  write_text(fs::path(path.string() + ".json"), side.dump(2) + "\n");
}

inline FieldFunction read_field(const fs::path& path) {
  const json side = json::parse(read_bytes(fs::path(path.string() + ".json")));
  const auto rows = side.at("rows").get<Eigen::Index>(), cols = side.at("cols").get<Eigen::Index>();
  const auto bytes = read_bytes(path);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(Complex)) {
    throw Error("field block " + path.string() + " has the wrong size");
  }
  CMatrix v(rows, cols);
  std::memcpy(v.data(), bytes.data(), bytes.size());
  const auto& g = side.at("tgrid");
  return {v, TGrid(g.at("delta").get<double>(), g.at("R").get<double>(), g.at("q").get<int>())};
}

// ---------------------------------------------------------------------------
// dense oracle cache, keyed by the FNV-1a hash of the case descriptor

inline std::string oracle_key(const CaseDesc& c) { return hex64(fnv1a(to_json(c).dump())); }

inline void save_oracle(const fs::path& dir, const std::string& key, const SpectralOracle& o) {
  fs::create_directories(dir);
  const auto n = o.eigenvalues.size();
  std::vector<char> buf;
  auto put = [&](const void* p, std::size_t bytes) {
    const auto* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + bytes);
  };
  const std::int64_t header[2] = {static_cast<std::int64_t>(n), o.hermitian ? 1 : 0};
  put(header, sizeof header);
  const double meta[2] = {o.condition, o.residual};
  put(meta, sizeof meta);
  put(o.eigenvalues.data(), static_cast<std::size_t>(n) * sizeof(Complex));
  put(o.vectors.data(), static_cast<std::size_t>(n * n) * sizeof(Complex));
  put(o.inverse.data(), static_cast<std::size_t>(n * n) * sizeof(Complex));
  write_bytes(dir / (key + ".oracle"), buf.data(), buf.size());
}

inline std::optional<SpectralOracle> load_oracle(const fs::path& dir, const std::string& key) {
  const fs::path p = dir / (key + ".oracle");
  if (!fs::exists(p)) return std::nullopt;
  const auto buf = read_bytes(p);
  std::int64_t header[2];
  double meta[2];
  if (buf.size() < sizeof header + sizeof meta) return std::nullopt;
  std::memcpy(header, buf.data(), sizeof header);
  std::memcpy(meta, buf.data() + sizeof header, sizeof meta);
  const auto n = static_cast<Eigen::Index>(header[0]);
  const std::size_t need = sizeof header + sizeof meta + static_cast<std::size_t>(n + 2 * n * n) * sizeof(Complex);
  if (buf.size() != need) return std::nullopt;
  SpectralOracle o;
  o.hermitian = header[1] != 0;
  o.condition = meta[0];
  o.residual = meta[1];
  o.eigenvalues.resize(n);
  o.vectors.resize(n, n);
  o.inverse.resize(n, n);
  const char* at = buf.data() + sizeof header + sizeof meta;
  std::memcpy(o.eigenvalues.data(), at, static_cast<std::size_t>(n) * sizeof(Complex));
  at += static_cast<std::size_t>(n) * sizeof(Complex);
  std::memcpy(o.vectors.data(), at, static_cast<std::size_t>(n * n) * sizeof(Complex));
  at += static_cast<std::size_t>(n * n) * sizeof(Complex);
  std::memcpy(o.inverse.data(), at, static_cast<std::size_t>(n * n) * sizeof(Complex));
  o.valid = o.condition <= 1e8 && o.residual <= 1e-10;
  return o;
}

/// Builds the operator, reusing a cached oracle when one exists under dir.
inline OperatorPtr build_operator_cached(const CaseDesc& c, const std::optional<fs::path>& dir) {
  OperatorPtr op = build_operator(c);
  if (!dir || op->size() > SectorialOperator::kDenseBudget) return op;
  const std::string key = oracle_key(c);
  if (auto o = load_oracle(*dir, key); o && o->eigenvalues.size() == static_cast<Eigen::Index>(op->size())) {
    op->adopt_oracle(std::move(*o));
  } else {
    save_oracle(*dir, key, op->oracle());
  }
  return op;
}

}  // namespace paralab::io

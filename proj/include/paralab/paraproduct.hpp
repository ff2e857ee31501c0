#pragma once
// The paraproduct
//   Pi(f, g) = sum_k psi~(t_k^{2m} L)[psi(t_k^{2m} L) g . A_{t_k} e^{-t_k^{2m} L} f] 2m dlog t,
// Pi_b f = Pi(f, b), its adjoints, and the boundedness / decay measurements.

#include "paralab/hardy.hpp"

namespace paralab {

struct ParaHypotheses {
  double critical = 0.0;  // n / 4m
  bool l2 = true;         // psi vanishes at 0 to order > n/4m
  bool lp_hp = true;      // psi~ decays at infinity to order > n/4m
  bool hp_l1 = true;      // psi order at 0, psi~ orders at 0 and infinity all > n/4m
  std::vector<std::string> warnings;
};

struct ParaproductSpec {
  PsiFunction psi;
  PsiFunction psi_tilde;
  TGrid grid;
  bool averaging = true;
  ContourOptions contour;
  SemigroupOptions semigroup;
  ParaHypotheses hypotheses;
};

inline ParaHypotheses para_hypotheses(const SectorialOperator& op, const PsiFunction& psi,
                                      const PsiFunction& psi_tilde) {
  ParaHypotheses h;
  h.critical = critical_order(op);
  h.l2 = psi.alpha() > h.critical;
  h.lp_hp = psi_tilde.beta() > h.critical;
  h.hp_l1 = h.l2 && psi_tilde.alpha() > h.critical && psi_tilde.beta() > h.critical;
  if (!h.l2) h.warnings.push_back("L2 bound: psi order at 0 <= n/4m");
  if (!h.lp_hp) h.warnings.push_back("Lp -> Hp bound: psi~ order at infinity <= n/4m");
  if (!h.hp_l1) h.warnings.push_back("Hp -> Lp bound: an order of psi or psi~ is <= n/4m");
  return h;
}

inline ParaproductSpec make_paraproduct_spec(const SectorialOperator& op, const PsiFunction& psi,
                                             const PsiFunction& psi_tilde, const TGrid& grid,
                                             bool averaging = true) {
  require_sector(op, psi);
  require_sector(op, psi_tilde);
  ParaproductSpec s;
  s.psi = psi;
  s.psi_tilde = psi_tilde;
  s.grid = grid;
  s.averaging = averaging;
  s.hypotheses = para_hypotheses(op, psi, psi_tilde);
  return s;
}

namespace detail {

inline constexpr Eigen::Index kParaBlock = 32;

/// A_t applied to every column.
inline CMatrix average_columns(const MetricMeasureSpace& space, double t, const CMatrix& F) {
  const auto n = static_cast<Eigen::Index>(space.size());
  const int shells = space.shells_below(t);
  const RVector& w = space.weights();
  if (shells > space.max_lattice_distance()) {
    const CMatrix mean = (w.cast<Complex>().transpose() * F) / space.total_measure();
    return mean.replicate(n, 1);
  }
  const CMatrix Ft = F.transpose();
  CMatrix out(F.cols(), n);
  parallel_for(space.size(), [&](std::size_t x) {
    CVector s = CVector::Zero(F.cols());
    double v = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) {
      s += w[y] * Ft.col(y);
      v += w[y];
    }
    out.col(static_cast<Eigen::Index>(x)) = s / v;
  });
  return out.transpose();
}

/// mu-adjoint of A_t applied to every column.
inline CMatrix average_adjoint_columns(const MetricMeasureSpace& space, double t, const CMatrix& G) {
  const auto n = static_cast<Eigen::Index>(space.size());
  const int shells = space.shells_below(t);
  const RVector& w = space.weights();
  if (shells > space.max_lattice_distance()) {
    const CMatrix mean = (w.cast<Complex>().transpose() * G) / space.total_measure();
    return mean.replicate(n, 1);
  }
  RVector vol(n);
  for (std::size_t x = 0; x < space.size(); ++x) {
    double v = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) v += w[y];
    vol[static_cast<Eigen::Index>(x)] = v;
  }
  const CMatrix Gt = (G.array().colwise() * (w.array() / vol.array()).cast<Complex>()).matrix().transpose();
  CMatrix out(G.cols(), n);
  parallel_for(space.size(), [&](std::size_t y) {
    CVector s = CVector::Zero(G.cols());
    for (std::uint32_t x : space.shell_prefix(y, shells)) s += Gt.col(x);
    out.col(static_cast<Eigen::Index>(y)) = s;
  });
  return out.transpose();
}

/// Elementwise product with a single column broadcast against many.
inline CMatrix broadcast_product(const CMatrix& a, const CMatrix& b) {
  if (a.cols() == b.cols()) return a.cwiseProduct(b);
  if (a.cols() == 1) return (b.array().colwise() * a.col(0).array()).matrix();
  if (b.cols() == 1) return (a.array().colwise() * b.col(0).array()).matrix();
  throw InvalidArgument("paraproduct: column counts " + std::to_string(a.cols()) + " and " +
                        std::to_string(b.cols()) + " do not broadcast");
}

inline Eigen::Index broadcast_cols(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.cols() && a.cols() != 1 && b.cols() != 1) {
    throw InvalidArgument("paraproduct: column counts do not broadcast");
  }
  return std::max(a.cols(), b.cols());
}

inline CMatrix column_block(const CMatrix& a, Eigen::Index start, Eigen::Index count) {
  return a.cols() == 1 ? a : CMatrix(a.middleCols(start, count));
}

inline std::vector<double> heat_times(const SectorialOperator& op, const TGrid& grid) {
  std::vector<double> s;
  s.reserve(grid.size());
  for (double t : grid.nodes()) s.push_back(std::pow(t, op.order_2m()));
  return s;
}

inline void check_point_function(const SectorialOperator& op, const CMatrix& f, const char* what) {
  if (f.rows() != static_cast<Eigen::Index>(op.size()) || f.cols() < 1) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(op.size()) + " rows");
  }
}

/// Runs body on column blocks of at most kParaBlock columns.
template <class Body>
CMatrix blocked(const CMatrix& a, const CMatrix& b, Body&& body) {
  const Eigen::Index P = broadcast_cols(a, b);
  if (P <= kParaBlock) return body(a, b);
  CMatrix out(a.rows(), P);
  for (Eigen::Index s = 0; s < P; s += kParaBlock) {
    const Eigen::Index c = std::min(kParaBlock, P - s);
    out.middleCols(s, c) = body(column_block(a, s, c), column_block(b, s, c));
  }
  return out;
}

}  // namespace detail

/// Pi(f, g); columns of f and g are paired, a single column broadcasts.
inline CMatrix para_bilinear(const SectorialOperator& op, const ParaproductSpec& spec, const CMatrix& f,
                             const CMatrix& g) {
  detail::check_point_function(op, f, "paraproduct");
  detail::check_point_function(op, g, "paraproduct");
  const auto times = detail::heat_times(op, spec.grid);
  const double w = op.order_2m() * spec.grid.dlog();
  return detail::blocked(f, g, [&](const CMatrix& fb, const CMatrix& gb) {
    const auto Y = apply_psi_grid(op, spec.psi, spec.grid, gb, spec.contour);
    const auto H = semigroup_grid(op, times, fb, spec.semigroup);
    std::vector<CMatrix> W(times.size());
    parallel_for(times.size(), [&](std::size_t k) {
      const CMatrix Z = spec.averaging ? detail::average_columns(op.space(), spec.grid[k], H[k]) : H[k];
      W[k] = detail::broadcast_product(Y[k], Z);
    });
    return CMatrix(w * accumulate_psi_grid(op, spec.psi_tilde, spec.grid, W, spec.contour));
  });
}

/// Pi_b f = Pi(f, b).
inline CMatrix paraproduct_apply(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& b,
                                 const CMatrix& f) {
  return para_bilinear(op, spec, f, CMatrix(b));
}

/// Pi_b^* g = sum_k e^{-t_k^{2m} L^*} A_{t_k}^* [conj(psi(t_k^{2m} L) b) . psi~(t_k^{2m} L)^* g] 2m dlog t.
inline CMatrix paraproduct_adjoint_apply(const SectorialOperator& op, const ParaproductSpec& spec,
                                         const CVector& b, const CMatrix& g) {
  detail::check_point_function(op, CMatrix(b), "paraproduct_adjoint");
  detail::check_point_function(op, g, "paraproduct_adjoint");
  const OperatorPtr adj = adjoint_operator(op);
  const auto times = detail::heat_times(op, spec.grid);
  const double w = op.order_2m() * spec.grid.dlog();
  const auto Y = apply_psi_grid(op, spec.psi, spec.grid, CMatrix(b), spec.contour);
  const CMatrix one_col = CMatrix(b);
  return detail::blocked(one_col, g, [&](const CMatrix&, const CMatrix& gb) {
    const auto X = apply_psi_grid(*adj, spec.psi_tilde.conjugate(), spec.grid, gb, spec.contour);
    std::vector<CMatrix> V(times.size());
    parallel_for(times.size(), [&](std::size_t k) {
      const CMatrix W = detail::broadcast_product(CMatrix(Y[k].conjugate()), X[k]);
      V[k] = spec.averaging ? detail::average_adjoint_columns(op.space(), spec.grid[k], W) : W;
    });
    return CMatrix(w * semigroup_accumulate(*adj, times, V, spec.semigroup));
  });
}

/// Adjoint of g |-> Pi(f, g): sum_k psi(t_k^{2m} L)^* [conj(A e^{-t_k^{2m} L} f) . psi~(t_k^{2m} L)^* h] 2m dlog t.
inline CMatrix para_dual(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& f,
                         const CMatrix& h) {
  detail::check_point_function(op, CMatrix(f), "para_dual");
  detail::check_point_function(op, h, "para_dual");
  const OperatorPtr adj = adjoint_operator(op);
  const auto times = detail::heat_times(op, spec.grid);
  const double w = op.order_2m() * spec.grid.dlog();
  const auto H = semigroup_grid(op, times, CMatrix(f), spec.semigroup);
  std::vector<CMatrix> Zc(times.size());
  parallel_for(times.size(), [&](std::size_t k) {
    const CMatrix Z = spec.averaging ? detail::average_columns(op.space(), spec.grid[k], H[k]) : H[k];
    Zc[k] = Z.conjugate();
  });
  const CMatrix one_col = CMatrix(f);
  return detail::blocked(one_col, h, [&](const CMatrix&, const CMatrix& hb) {
    const auto X = apply_psi_grid(*adj, spec.psi_tilde.conjugate(), spec.grid, hb, spec.contour);
    std::vector<CMatrix> W(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) W[k] = detail::broadcast_product(Zc[k], X[k]);
    return CMatrix(w * accumulate_psi_grid(*adj, spec.psi.conjugate(), spec.grid, W, spec.contour));
  });
}

// ---------------------------------------------------------------------------
// probes

struct ProbeSet {
  CMatrix columns;
  std::vector<std::string> kinds;

  void add(const CVector& v, std::string kind) {
    columns.conservativeResize(v.size(), columns.cols() + 1);
    columns.col(columns.cols() - 1) = v;
    kinds.push_back(std::move(kind));
  }
};

/// Random probes (complex Gaussian, or bounded with |f| <= 1) followed by
/// structured ones: ball indicators, the constant, an alternating sign
/// pattern, and for Gaussian sets eigenvectors spread across the spectrum.
inline ProbeSet para_probes(const SectorialOperator& op, int trials, Rng& rng, bool bounded,
                            const SemigroupOptions& sopt = {}) {
  if (trials < 0) throw InvalidArgument("para_probes: trials must be >= 0");
  const auto& space = op.space();
  const auto n = static_cast<Eigen::Index>(space.size());
  ProbeSet ps;
  ps.columns.resize(n, 0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  for (int i = 0; i < trials; ++i) {
    if (bounded) {
      const CVector r = random_uniform_real(n, rng, 0.0, 1.0);
      CVector v(n);
      for (Eigen::Index j = 0; j < n; ++j) v[j] = r[j] * std::polar(1.0, phase(rng));
      ps.add(v, "random");
    } else {
      ps.add(random_gaussian(n, rng), "random");
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  const std::size_t centers[2] = {space.base_point(), pick(rng)};
  for (std::size_t c : centers) {
    for (double r = 2.0 * space.spacing(); r < space.diameter(); r *= 2.0) {
      CVector v = CVector::Zero(n);
      for (auto y : space.ball_members(c, r)) v[y] = 1.0;
      ps.add(v, "indicator");
    }
  }
  ps.add(CVector::Ones(n), "constant");
  CVector alt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = space.coords(static_cast<std::size_t>(i));
    alt[i] = (std::accumulate(c.begin(), c.end(), 0) % 2) ? -1.0 : 1.0;
  }
  ps.add(alt, "alternating");
  if (!bounded && use_oracle(op, sopt)) {
    const auto& o = op.oracle();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return std::abs(o.eigenvalues[a]) < std::abs(o.eigenvalues[b]);
    });
    const auto kd = op.kernel_basis().cols();
    const int count = 8;
    for (int j = 0; j < count && kd + j < n; ++j) {
      const auto pos = kd + static_cast<Eigen::Index>(std::llround(double(j) * double(n - 1 - kd) / (count - 1)));
      CVector v = o.vectors.col(idx[static_cast<std::size_t>(std::min(pos, n - 1))]);
      ps.add(v / space.norm(v), "eigenvector");
    }
  }
  return ps;
}

// ---------------------------------------------------------------------------
// boundedness measurements

struct ParaBoundReport {
  std::string quantity;
  double sup_ratio = 0.0;       // against ||b||_BMO (||b||_inf when degenerate)
  double sup_ratio_linf = 0.0;  // against ||b||_inf
  double bmo = 0.0;
  double linf = 0.0;
  bool degenerate = false;      // ||b||_BMO vanished
  bool hypothesis_ok = true;
  std::string argmax;
  std::vector<double> ratios;   // per probe, same normalization as sup_ratio
  std::vector<std::string> kinds;
  double refinement_delta = 0.0;  // relative change of sup_ratio on the half-q grid; NaN if not run
};

namespace detail {

inline void fill_denominators(const SectorialOperator& op, const CVector& b, int M, ParaBoundReport& rep,
                              const SemigroupOptions& sopt) {
  rep.linf = max_abs(b);
  rep.bmo = bmo_norm(op, b, M, {}, sopt);
  rep.degenerate = !(rep.bmo > 1e-12 * std::max(rep.linf, 1e-300));
}

inline void finish_ratios(ParaBoundReport& rep, const std::vector<double>& raw) {
  const double d_bmo = rep.degenerate ? rep.linf : rep.bmo;
  rep.ratios.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    rep.ratios[i] = d_bmo > 0.0 ? raw[i] / d_bmo : 0.0;
    const double rl = rep.linf > 0.0 ? raw[i] / rep.linf : 0.0;
    rep.sup_ratio_linf = std::max(rep.sup_ratio_linf, rl);
    if (rep.argmax.empty() || rep.ratios[i] > rep.sup_ratio) {
      rep.sup_ratio = rep.ratios[i];
      rep.argmax = rep.kinds[i];
    }
  }
}

inline std::vector<double> l2_raw(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& b,
                                  const ProbeSet& ps) {
  const CMatrix out = paraproduct_apply(op, spec, b, ps.columns);
  std::vector<double> raw(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double den = op.space().norm(ps.columns.col(c));
    raw[static_cast<std::size_t>(c)] = den > 0.0 ? op.space().norm(out.col(c)) / den : 0.0;
  }
  return raw;
}

}  // namespace detail

/// sup ||Pi_b f||_2 / (||b||_BMO ||f||_2) over random and structured probes.
inline ParaBoundReport measure_para_l2(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& b,
                                       int trials, std::uint64_t seed, int M = 0, bool refine = false) {
  if (M == 0) M = default_bmo_order(op);
  ParaBoundReport rep;
  rep.quantity = "para_l2";
  rep.hypothesis_ok = spec.hypotheses.l2;
  detail::fill_denominators(op, b, M, rep, spec.semigroup);
  Rng rng(seed);
  const ProbeSet ps = para_probes(op, trials, rng, false, spec.semigroup);
  rep.kinds = ps.kinds;
  detail::finish_ratios(rep, detail::l2_raw(op, spec, b, ps));
  rep.refinement_delta = std::numeric_limits<double>::quiet_NaN();
  if (refine && spec.grid.q() % 2 == 0) {
    ParaproductSpec half = spec;
    half.grid = spec.grid.with_q(spec.grid.q() / 2);
    ParaBoundReport coarse = rep;
    coarse.sup_ratio = 0.0;
    coarse.sup_ratio_linf = 0.0;
    coarse.argmax.clear();
    detail::finish_ratios(coarse, detail::l2_raw(op, half, b, ps));
    rep.refinement_delta =
        rep.sup_ratio > 0.0 ? std::abs(rep.sup_ratio - coarse.sup_ratio) / rep.sup_ratio : 0.0;
  }
  return rep;
}

/// p in (2, inf): sup ||Pi_b f||_{H^p} / (||b||_BMO ||f||_p) with the Hardy norm
/// taken through psi_h; p = inf: sup ||Pi_b f||_BMO / (||b||_BMO ||f||_inf).
inline ParaBoundReport measure_para_lp_hp(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& b,
                                          double p, int trials, std::uint64_t seed,
                                          std::optional<PsiFunction> psi_h = std::nullopt, int M = 0) {
  if (!(p > 2.0)) throw InvalidArgument("measure_para_lp_hp: p must lie in (2, inf]");
  if (M == 0) M = default_bmo_order(op);
  const PsiFunction ph = psi_h ? *psi_h : PsiFunction::exp_monomial(default_bmo_order(op));
  if (!std::isinf(p)) require_hardy_decay(op, ph, p);
  const auto& space = op.space();
  ParaBoundReport rep;
  rep.quantity = std::isinf(p) ? "para_linf_bmo" : "para_lp_hp";
  rep.hypothesis_ok = spec.hypotheses.lp_hp;
  detail::fill_denominators(op, b, M, rep, spec.semigroup);
  Rng rng(seed);
  const ProbeSet ps = para_probes(op, trials, rng, true, spec.semigroup);
  rep.kinds = ps.kinds;
  const CMatrix out = paraproduct_apply(op, spec, b, ps.columns);
  std::vector<double> raw(static_cast<std::size_t>(out.cols()));
  if (std::isinf(p)) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      raw[static_cast<std::size_t>(c)] =
          bmo_norm(op, out.col(c), M, {}, spec.semigroup) / max_abs(ps.columns.col(c));
    }
  } else {
    for (Eigen::Index s = 0; s < out.cols(); s += detail::kParaBlock) {
      const Eigen::Index cnt = std::min(detail::kParaBlock, out.cols() - s);
      const auto ys = apply_psi_grid(op, ph, spec.grid, CMatrix(out.middleCols(s, cnt)), spec.contour);
      parallel_for(static_cast<std::size_t>(cnt), [&](std::size_t j) {
        CMatrix v(out.rows(), static_cast<Eigen::Index>(ys.size()));
        for (std::size_t k = 0; k < ys.size(); ++k) {
          v.col(static_cast<Eigen::Index>(k)) = ys[k].col(static_cast<Eigen::Index>(j));
        }
        const auto c = s + static_cast<Eigen::Index>(j);
        raw[static_cast<std::size_t>(c)] =
            tent_norm(space, {v, spec.grid}, p) / space.norm(ps.columns.col(c), p);
      });
    }
  }
  detail::finish_ratios(rep, raw);
  rep.refinement_delta = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

struct ParaMoleculeReport {
  double sup_ratio = 0.0;  // sup_m ||Pi(f, m)||_1 / ||f||_inf
  std::vector<double> ratios;
  bool hypothesis_ok = true;
};

/// sup over molecules m of ||Pi(f, m)||_{L^1} / ||f||_inf.
inline ParaMoleculeReport measure_para_hp_l1(const SectorialOperator& op, const ParaproductSpec& spec,
                                             const CVector& f, const std::vector<Molecule>& molecules) {
  if (molecules.empty()) throw InvalidArgument("measure_para_hp_l1: empty molecule set");
  ParaMoleculeReport rep;
  rep.hypothesis_ok = spec.hypotheses.hp_l1;
  const auto n = static_cast<Eigen::Index>(op.size());
  CMatrix G(n, static_cast<Eigen::Index>(molecules.size()));
  for (std::size_t i = 0; i < molecules.size(); ++i) {
    if (!molecules[i].valid) throw InvalidArgument("measure_para_hp_l1: molecule " + std::to_string(i) + " is not valid");
    G.col(static_cast<Eigen::Index>(i)) = molecules[i].m;
  }
  const double finf = max_abs(f);
  rep.ratios.assign(molecules.size(), 0.0);
  if (finf == 0.0) return rep;
  const CMatrix out = para_bilinear(op, spec, CMatrix(f), G);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    rep.ratios[static_cast<std::size_t>(c)] = op.space().norm(out.col(c), 1.0) / finf;
    rep.sup_ratio = std::max(rep.sup_ratio, rep.ratios[static_cast<std::size_t>(c)]);
  }
  return rep;
}

struct ParaLinfL2Report {
  double sup_ratio = 0.0;  // sup ||Pi(f, g)||_2 / (||f||_inf ||g||_2)
  double constant_ratio = 0.0;  // f = 1 probes
  std::vector<double> ratios;
};

/// Pi : L^inf x L^2 -> L^2 over random pairs, plus f = 1 against the same g.
inline ParaLinfL2Report measure_para_linf_l2(const SectorialOperator& op, const ParaproductSpec& spec, int trials,
                                             std::uint64_t seed) {
  if (trials < 1) throw InvalidArgument("measure_para_linf_l2: trials must be >= 1");
  const auto& space = op.space();
  const auto n = static_cast<Eigen::Index>(op.size());
  Rng rng(seed);
  CMatrix F(n, 2 * trials), G(n, 2 * trials);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  for (int i = 0; i < trials; ++i) {
    const CVector r = random_uniform_real(n, rng, 0.0, 1.0);
    for (Eigen::Index j = 0; j < n; ++j) F(j, i) = r[j] * std::polar(1.0, phase(rng));
    G.col(i) = random_gaussian(n, rng);
    F.col(trials + i).setOnes();
    G.col(trials + i) = G.col(i);
  }
  const CMatrix out = para_bilinear(op, spec, F, G);
  ParaLinfL2Report rep;
  rep.ratios.resize(static_cast<std::size_t>(trials));
  for (int i = 0; i < 2 * trials; ++i) {
    const double r = space.norm(out.col(i)) / (max_abs(F.col(i)) * space.norm(G.col(i)));
    if (i < trials) {
      rep.ratios[static_cast<std::size_t>(i)] = r;
      rep.sup_ratio = std::max(rep.sup_ratio, r);
    } else {
      rep.constant_ratio = std::max(rep.constant_ratio, r);
    }
  }
  rep.sup_ratio = std::max(rep.sup_ratio, rep.constant_ratio);
  return rep;
}

/// max_k ||A_{t_k} e^{-t_k^{2m} L} f||_inf / ||f||_inf over the probes.
inline double average_heat_constant(const SectorialOperator& op, const TGrid& grid, const CMatrix& probes,
                                    const SemigroupOptions& sopt = {}) {
  const auto H = semigroup_grid(op, detail::heat_times(op, grid), probes, sopt);
  std::vector<double> best(H.size(), 0.0);
  parallel_for(H.size(), [&](std::size_t k) {
    const CMatrix Z = detail::average_columns(op.space(), grid[k], H[k]);
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
      best[k] = std::max(best[k], max_abs(Z.col(c)) / max_abs(probes.col(c)));
    }
  });
  return *std::max_element(best.begin(), best.end());
}

// ---------------------------------------------------------------------------
// Pi_b(1) = b and Pi_b^*(1) = 0

struct ParaIdentityReport {
  double residual = 0.0;               // ||Pi_b(1) - Qb||_2, Q the projection onto ran(L)
  double calderon_residual = 0.0;      // ||sum psi~ psi b 2m dlog - Qb||_2
  double conservation_residual = 0.0;  // max_k ||A e^{-t_k^{2m} L} 1 - 1||_inf
  double conservation_term = 0.0;      // bound on the part of Pi_b(1) driven by that defect
  double budget = 0.0;
  double adjoint_residual = 0.0;       // ||Pi_b^*(1)||_2
  double adjoint_ratio = 0.0;          // ||Pi_b^*(1)||_2 / ||b||_inf
  bool within_budget = false;
};

/// Pi_b(1) against Qb with the budget
///   calderon residual + 2m dlog sum_k ||psi~(t_k^{2m} L)|| ||psi(t_k^{2m} L) b|| ||A e^{-t_k^{2m} L} 1 - 1||_inf,
/// the operator norm bounded by cond(V) max |psi~| on the spectrum (or the
/// sup of |psi~| on the sector when no oracle is available).
inline ParaIdentityReport para_identity_check(const SectorialOperator& op, const ParaproductSpec& spec,
                                              const CVector& b) {
  const auto& space = op.space();
  const auto n = static_cast<Eigen::Index>(op.size());
  const CMatrix one = CMatrix::Ones(n, 1);
  const double w = op.order_2m() * spec.grid.dlog();
  ParaIdentityReport rep;
  const CVector Qb = op.project_range(CMatrix(b)).col(0);
  const CVector pb1 = paraproduct_apply(op, spec, b, one).col(0);
  rep.residual = space.norm(CVector(pb1 - Qb));
  const auto rec = calderon_reconstruct(op, spec.psi, spec.psi_tilde, CMatrix(b), spec.grid, spec.contour);
  rep.calderon_residual = space.norm(CVector(rec.result.col(0) - Qb));

  const auto Y = apply_psi_grid(op, spec.psi, spec.grid, CMatrix(b), spec.contour);
  const auto H = semigroup_grid(op, detail::heat_times(op, spec.grid), one, spec.semigroup);
  double op_bound = 0.0;
  const bool oracle = use_oracle(op, spec.semigroup);
  for (std::size_t k = 0; k < spec.grid.size(); ++k) {
    const CMatrix Z = spec.averaging ? detail::average_columns(space, spec.grid[k], H[k]) : H[k];
    const double defect = max_abs(CVector(Z.col(0) - one.col(0)));
    rep.conservation_residual = std::max(rep.conservation_residual, defect);
    const double s = std::pow(spec.grid[k], op.order_2m());
    double psi_max = 0.0;
    if (oracle) {
      const auto& o = op.oracle();
      for (Eigen::Index i = 0; i < o.eigenvalues.size(); ++i) psi_max = std::max(psi_max, std::abs(spec.psi_tilde(s * o.eigenvalues[i])));
      op_bound = o.condition * psi_max;
    } else {
      op_bound = decay_constant(spec.psi_tilde);
    }
    rep.conservation_term += w * op_bound * space.norm(Y[k].col(0)) * defect;
  }
  rep.budget = rep.calderon_residual + rep.conservation_term + 1e-12 * std::max(1.0, space.norm(b));
  rep.within_budget = rep.residual <= rep.budget;
  const CVector adj1 = paraproduct_adjoint_apply(op, spec, b, one).col(0);
  rep.adjoint_residual = space.norm(adj1);
  const double binf = max_abs(b);
  rep.adjoint_ratio = binf > 0.0 ? rep.adjoint_residual / binf : 0.0;
  return rep;
}

/// ||Pi_b f - Pi_b f (grid widened by each factor)|| / ||Pi_b f (widest)||, the
/// tail left by truncating the t-integral to [delta, R].
inline std::vector<double> para_truncation_tails(const SectorialOperator& op, const ParaproductSpec& spec,
                                                 const CVector& b, const CMatrix& f,
                                                 const std::vector<double>& factors) {
  std::vector<CMatrix> outs;
  outs.push_back(paraproduct_apply(op, spec, b, f));
  for (double a : factors) {
    ParaproductSpec wide = spec;
    wide.grid = spec.grid.widened(a);
    outs.push_back(paraproduct_apply(op, wide, b, f));
  }
  const double ref = std::max(outs.back().norm(), 1e-300);
  std::vector<double> tails;
  for (std::size_t i = 0; i + 1 < outs.size(); ++i) tails.push_back((outs[i] - outs.back()).norm() / ref);
  return tails;
}

// ---------------------------------------------------------------------------
// off-diagonal decay of phi(t^{2m} L) Pi(f, .)

struct OffdiagMultiplier {
  enum class Kind { one_minus_heat, heat_monomial };
  Kind kind = Kind::one_minus_heat;
  int M = 1;

  std::string label() const {
    return (kind == Kind::one_minus_heat ? "(1-e^-z)^" : "(ze^-z)^") + std::to_string(M);
  }
  /// Order of vanishing at 0.
  double order() const { return M; }

  /// phi(t_k^{2m} L) v for every node.
  std::vector<CMatrix> sweep(const SectorialOperator& op, const TGrid& grid, const CMatrix& v,
                             const ContourOptions& copt, const SemigroupOptions& sopt) const {
    if (M < 1) throw InvalidArgument("OffdiagMultiplier: M must be >= 1");
    if (kind == Kind::heat_monomial) {
      const PsiFunction phi(1.0, double(M), double(M), 0.0, "exp_monomial");
      return apply_psi_grid(op, phi, grid, v, copt);
    }
    // (1 - e^{-s z})^M = sum_j binom(M, j) (-1)^j e^{-j s z}
    std::vector<double> times;
    for (double t : grid.nodes()) {
      for (int j = 1; j <= M; ++j) times.push_back(j * std::pow(t, op.order_2m()));
    }
    const auto heat = semigroup_grid(op, times, v, sopt);
    std::vector<CMatrix> out(grid.size(), v);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (int j = 1; j <= M; ++j) {
        const double c = boost::math::binomial_coefficient<double>(unsigned(M), unsigned(j)) * ((j % 2) ? -1.0 : 1.0);
        out[k] += c * heat[k * static_cast<std::size_t>(M) + static_cast<std::size_t>(j - 1)];
      }
    }
    return out;
  }
};

struct ParaOffdiagReport {
  OffdiagReport fit;
  std::string multiplier;
  double admissible = 0.0;  // min(beta1, alpha2): psi order at 0, psi~ order at 0
  double ceiling = 0.0;     // min(beta2, delta): psi~ order at infinity, phi order at 0
  bool hypothesis_ok = true;
};

/// sup over g in L^2(E) of ||phi(t^{2m} L) Pi(f, g)||_{L^2(F)} / (||f||_inf ||g||_2)
/// across fit_grid, with the decay order fitted as in measure_offdiag.
inline ParaOffdiagReport para_offdiag(const SectorialOperator& op, const ParaproductSpec& spec, const CVector& f,
                                      const std::vector<std::size_t>& E, const std::vector<std::size_t>& F,
                                      const OffdiagMultiplier& phi, const TGrid& fit_grid,
                                      double floor = 1e-14) {
  const double finf = max_abs(f);
  if (!(finf > 0.0)) throw InvalidArgument("para_offdiag: f vanishes");
  ParaOffdiagReport rep;
  rep.multiplier = phi.label();
  rep.admissible = std::min(spec.psi.alpha(), spec.psi_tilde.alpha());
  rep.ceiling = std::min(spec.psi_tilde.beta(), phi.order());
  rep.hypothesis_ok = spec.hypotheses.hp_l1;
  const CMatrix fm(f);
  FamilySweep family = [&](const CMatrix& basis) {
    const CMatrix v = para_bilinear(op, spec, fm, basis) / finf;
    return phi.sweep(op, fit_grid, v, spec.contour, spec.semigroup);
  };
  rep.fit = measure_offdiag(op.space(), family, E, F, fit_grid, op.order_2m(), floor);
  return rep;
}

// ---------------------------------------------------------------------------
// fractional Leibniz rule

struct LeibnizReport {
  double s = 0.0;
  double residual = 0.0;  // ||L^{s/2m} Pi(f, g) - Pi_s(f, L^{s/2m} g)|| / ||Pi_s(f, L^{s/2m} g)||
  double norm_ratio = 0.0;  // ||L^{s/2m} Pi(f, g)|| / (||f||_inf ||L^{s/2m} g||)
};

/// L^{s/2m} Pi_{psi~, psi}(f, g) against Pi_{psi~_s, psi_s}(f, L^{s/2m} g),
/// psi~_s = z^{s/2m} psi~, psi_s = z^{-s/2m} psi, on the same grid.
inline LeibnizReport leibniz_check(const SectorialOperator& op, const ParaproductSpec& spec, double s,
                                   const CVector& f, const CVector& g) {
  const double e = s / op.order_2m();
  if (!(s >= 0.0 && s < op.order_2m())) throw InvalidArgument("leibniz_check: s must lie in [0, 2m)");
  if (!(spec.psi.alpha() > e)) {
    throw HypothesisViolated("leibniz_check: psi must vanish at 0 to order > s/2m (alpha = " +
                             std::to_string(spec.psi.alpha()) + ")");
  }
  if (!(spec.psi_tilde.beta() > e)) {
    throw HypothesisViolated("leibniz_check: psi~ must decay at infinity to order > s/2m (beta = " +
                             std::to_string(spec.psi_tilde.beta()) + ")");
  }
  LeibnizReport rep;
  rep.s = s;
  const auto& space = op.space();
  const CVector pfg = para_bilinear(op, spec, CMatrix(f), CMatrix(g)).col(0);
  if (s == 0.0) {
    rep.norm_ratio = space.norm(pfg) / (max_abs(f) * space.norm(CVector(op.project_range(CMatrix(g)).col(0))));
    return rep;
  }
  const CVector lhs = apply_fractional_power(op, s, CMatrix(pfg), spec.semigroup).col(0);
  const CVector lg = apply_fractional_power(op, s, CMatrix(g), spec.semigroup).col(0);
  ParaproductSpec shifted = spec;
  shifted.psi = spec.psi.times_power(-e);
  shifted.psi_tilde = spec.psi_tilde.times_power(e);
  const CVector rhs = para_bilinear(op, shifted, CMatrix(f), CMatrix(lg)).col(0);
  const double nr = space.norm(rhs);
  rep.residual = nr > 0.0 ? space.norm(CVector(lhs - rhs)) / nr : space.norm(lhs);
  rep.norm_ratio = space.norm(lhs) / (max_abs(f) * space.norm(lg));
  return rep;
}

}  // namespace paralab

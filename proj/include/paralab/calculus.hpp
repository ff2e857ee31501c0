#pragma once
// Functional calculus of a sectorial operator: psi(t^{2m} L) by contour
// quadrature, the semigroup, fractional powers, quadratic norms, Calderon
// reconstruction and off-diagonal measurements.

#include "paralab/contour.hpp"
#include "paralab/psi.hpp"
#include "paralab/tgrid.hpp"

#include <Eigen/SVD>

namespace paralab {

inline Symbol psi_symbol(const PsiFunction& psi, double s) {
  return [psi, s](Complex z) { return psi(s * z); };
}

inline std::vector<Symbol> psi_symbols(const PsiFunction& psi, const TGrid& grid, int order_2m) {
  std::vector<Symbol> out;
  out.reserve(grid.size());
  for (double t : grid.nodes()) out.push_back(psi_symbol(psi, std::pow(t, order_2m)));
  return out;
}

inline void require_sector(const SectorialOperator& op, const PsiFunction& psi) {
  if (!(psi.sigma() > op.sector_angle())) {
    throw InvalidArgument("psi validity angle " + std::to_string(psi.sigma()) +
                          " does not exceed the sector angle " + std::to_string(op.sector_angle()));
  }
}

/// psi(t^{2m} L) f on ran(L); ker L is annihilated.
inline CMatrix apply_psi(const SectorialOperator& op, const PsiFunction& psi, double t,
                         const CMatrix& f, const ContourOptions& opt = {}) {
  if (!(t > 0.0)) throw InvalidArgument("apply_psi: t must be > 0");
  require_sector(op, psi);
  return ContourEngine(op, opt).apply(psi_symbol(psi, std::pow(t, op.order_2m())), f);
}

/// psi(t_k^{2m} L) f for every grid node.
inline std::vector<CMatrix> apply_psi_grid(const SectorialOperator& op, const PsiFunction& psi,
                                           const TGrid& grid, const CMatrix& f,
                                           const ContourOptions& opt = {}) {
  require_sector(op, psi);
  return ContourEngine(op, opt).sweep(psi_symbols(psi, grid, op.order_2m()), f);
}

/// sum_k psi(t_k^{2m} L) v_k.
inline CMatrix accumulate_psi_grid(const SectorialOperator& op, const PsiFunction& psi,
                                   const TGrid& grid, const std::vector<CMatrix>& vs,
                                   const ContourOptions& opt = {}) {
  require_sector(op, psi);
  return ContourEngine(op, opt).accumulate(psi_symbols(psi, grid, op.order_2m()), vs);
}

/// Reference evaluation psi(t^{2m} Lambda) on the dense eigendecomposition.
inline CMatrix oracle_psi(const SectorialOperator& op, const PsiFunction& psi, double t,
                          const CMatrix& f) {
  const double s = std::pow(t, op.order_2m());
  return op.oracle().apply([&](Complex l) { return psi(s * l); }, f);
}

// ---------------------------------------------------------------------------
// semigroup

enum class SemigroupPath { automatic, oracle, contour };

struct SemigroupOptions {
  SemigroupPath path = SemigroupPath::automatic;
  std::size_t oracle_limit = 1024;  // automatic path: largest N for the dense oracle
  ContourOptions contour;
};

/// e^{-z} - 1/(1+z), which vanishes to second order at 0 and decays like 1/z.
inline Complex semigroup_remainder(Complex z) {
  if (std::abs(z) < 0.25) {
    // sum_{n>=2} (-z)^n (1/n! - 1)
    Complex term = -z;
    double fact = 1.0;
    Complex sum = 0.0;
    for (int n = 2; n <= 24; ++n) {
      term *= -z;
      fact *= n;
      sum += term * (1.0 / fact - 1.0);
    }
    return sum;
  }
  return std::exp(-z) - 1.0 / (1.0 + z);
}

inline bool use_oracle(const SectorialOperator& op, const SemigroupOptions& opt) {
  switch (opt.path) {
    case SemigroupPath::oracle:
      return true;
    case SemigroupPath::contour:
      return false;
    default:
      return op.size() <= opt.oracle_limit && op.oracle().valid;
  }
}

/// e^{-s_i L} f for each s_i in `times`.
inline std::vector<CMatrix> semigroup_grid(const SectorialOperator& op, const std::vector<double>& times,
                                           const CMatrix& f, const SemigroupOptions& opt = {}) {
  for (double s : times) {
    if (!(s > 0.0)) throw InvalidArgument("semigroup: t must be > 0");
  }
  std::vector<CMatrix> out(times.size());
  if (use_oracle(op, opt)) {
    const auto& o = op.oracle();
    const CMatrix c = o.inverse * f;
    parallel_for(times.size(), [&](std::size_t i) {
      const CVector d = (-times[i] * o.eigenvalues.array()).exp().matrix();
      out[i] = o.vectors * (d.asDiagonal() * c);
    });
    return out;
  }
  const CMatrix Pf = op.project_kernel(f);
  const CMatrix Qf = f - Pf;
  std::vector<Symbol> symbols;
  for (double s : times) symbols.push_back([s](Complex z) { return semigroup_remainder(s * z); });
  out = ContourEngine(op, opt.contour).sweep(symbols, Qf);
  const auto n = static_cast<Eigen::Index>(op.size());
  parallel_for(times.size(), [&](std::size_t i) {
    SparseMatrix a = Complex(times[i]) * op.matrix();
    SparseMatrix id(n, n);
    id.setIdentity();
    a += id;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalFailure("semigroup: factorization of I + tL failed");
    out[i] += Pf + op.project_range(CMatrix(lu.solve(Qf)));
  });
  return out;
}

inline CMatrix apply_semigroup(const SectorialOperator& op, double t, const CMatrix& f,
                               const SemigroupOptions& opt = {}) {
  return semigroup_grid(op, {t}, f, opt)[0];
}

/// sum_i e^{-s_i L} v_i.
inline CMatrix semigroup_accumulate(const SectorialOperator& op, const std::vector<double>& times,
                                    const std::vector<CMatrix>& vs, const SemigroupOptions& opt = {}) {
  if (times.size() != vs.size() || vs.empty()) throw InvalidArgument("semigroup_accumulate: size mismatch");
  for (double s : times) {
    if (!(s > 0.0)) throw InvalidArgument("semigroup: t must be > 0");
  }
  const Eigen::Index n = vs[0].rows(), m = vs[0].cols();
  if (use_oracle(op, opt)) {
    const auto& o = op.oracle();
    CMatrix acc = CMatrix::Zero(n, m);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const CVector d = (-times[i] * o.eigenvalues.array()).exp().matrix();
      acc.noalias() += d.asDiagonal() * (o.inverse * vs[i]);
    }
    return o.vectors * acc;
  }
  CMatrix out = CMatrix::Zero(n, m);
  std::vector<Symbol> symbols;
  std::vector<CMatrix> qs(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const double s = times[i];
    symbols.push_back([s](Complex z) { return semigroup_remainder(s * z); });
    out += op.project_kernel(vs[i]);
    qs[i] = op.project_range(vs[i]);
  }
  out += ContourEngine(op, opt.contour).accumulate(symbols, qs);
  std::vector<CMatrix> res(vs.size());
  parallel_for(vs.size(), [&](std::size_t i) {
    SparseMatrix a = Complex(times[i]) * op.matrix();
    SparseMatrix id(n, n);
    id.setIdentity();
    a += id;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalFailure("semigroup: factorization of I + tL failed");
    res[i] = op.project_range(CMatrix(lu.solve(qs[i])));
  });
  for (const auto& r : res) out += r;
  return out;
}

// ---------------------------------------------------------------------------
// fractional powers

/// L^{s/2m} f on the principal branch; the kernel component is sent to 0.
inline CMatrix apply_fractional_power(const SectorialOperator& op, double s, const CMatrix& f,
                                      const SemigroupOptions& opt = {}) {
  if (!(s > 0.0)) throw InvalidArgument("apply_fractional_power: s must be > 0");
  const double g = s / op.order_2m();
  if (use_oracle(op, opt)) {
    return op.oracle().apply([g](Complex l) { return l == Complex(0.0) ? Complex(0.0) : std::pow(l, g); }, f);
  }
  // L^g = psi(L) (I + L)^k with psi(z) = z^g / (1+z)^k, k > g.
  const int k = static_cast<int>(std::floor(g)) + 1;
  CMatrix v = op.project_range(f);
  for (int i = 0; i < k; ++i) v += op.matrix() * v;
  const PsiFunction psi(1.0, g, 0.0, double(k), "rational");
  return ContourEngine(op, opt.contour).apply(psi_symbol(psi, 1.0), v);
}

// ---------------------------------------------------------------------------
// square functions and reconstruction

/// (sum_k ||psi(t_k L) f||^2 dlog t)^{1/2} per column; note psi(tL), not t^{2m}.
inline RVector quadratic_norm(const SectorialOperator& op, const PsiFunction& psi, const CMatrix& f,
                              const TGrid& grid, const ContourOptions& opt = {}) {
  require_sector(op, psi);
  std::vector<Symbol> symbols;
  for (double t : grid.nodes()) symbols.push_back(psi_symbol(psi, t));
  const auto ys = ContourEngine(op, opt).sweep(symbols, f);
  const RVector& w = op.space().weights();
  RVector acc = RVector::Zero(f.cols());
  for (const auto& y : ys) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) acc[c] += (w.array() * y.col(c).array().abs2()).sum();
  }
  return (acc * grid.dlog()).cwiseSqrt();
}

struct Reconstruction {
  CMatrix result;
  double residual = 0.0;  // ||result - Qf|| / ||Qf|| (largest over columns)
};

/// sum_k psi psi~(t_k^{2m} L) f 2m dlog t, compared against the range part Qf.
inline Reconstruction calderon_reconstruct(const SectorialOperator& op, const PsiFunction& psi,
                                           const PsiFunction& psi_tilde, const CMatrix& f,
                                           const TGrid& grid, const ContourOptions& opt = {}) {
  require_sector(op, psi);
  require_sector(op, psi_tilde);
  const PsiFunction prod = psi.times(psi_tilde);
  std::vector<double> s;
  for (double t : grid.nodes()) s.push_back(std::pow(t, op.order_2m()));
  const double w = op.order_2m() * grid.dlog();
  Symbol g = [prod, s, w](Complex z) {
    Complex acc = 0.0;
    for (double sk : s) acc += prod(sk * z);
    return w * acc;
  };
  Reconstruction r;
  r.result = ContourEngine(op, opt).apply(g, f);
  const CMatrix Qf = op.project_range(f);
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const double nq = op.space().norm(Qf.col(c));
    const double e = op.space().norm(CVector(r.result.col(c) - Qf.col(c)));
    r.residual = std::max(r.residual, nq > 0 ? e / nq : e);
  }
  return r;
}

// ---------------------------------------------------------------------------
// off-diagonal estimates

/// t |-> T_t applied to a block of columns, for every node of a t-grid.
using FamilySweep = std::function<std::vector<CMatrix>(const CMatrix&)>;

struct OffdiagReport {
  double separation = 0.0;
  double gamma = 0.0;
  double C = 0.0;
  bool fitted = false;
  bool saturated = false;
  std::vector<double> t;
  std::vector<double> norm;   // sup_f ||T_t f||_{L2(F)} / ||f||_{L2(E)}
  std::vector<double> x;      // log(1 + D^{2m}/t^{2m})
  std::vector<double> envelope;  // running max of norm over s <= t
  std::vector<bool> used;     // point entered the fit
};

/// Least-squares fit log rho = log C - gamma x over the marked points.
inline std::pair<double, double> fit_decay(const std::vector<double>& x, const std::vector<double>& rho,
                                           const std::vector<bool>& used) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!used[i]) continue;
    const double y = std::log(rho[i]);
    sx += x[i];
    sy += y;
    sxx += x[i] * x[i];
    sxy += x[i] * y;
    ++n;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den <= 0) return {0.0, 0.0};
  const double slope = (n * sxy - sx * sy) / den;
  const double icpt = (sy - slope * sx) / n;
  return {-slope, std::exp(icpt)};
}

/// Norm of the compressed map 1_F T 1_E in L^2(mu), for each family member.
inline std::vector<double> compressed_norms(const MetricMeasureSpace& space, const FamilySweep& family,
                                            const std::vector<std::size_t>& E,
                                            const std::vector<std::size_t>& F) {
  const auto n = static_cast<Eigen::Index>(space.size());
  CMatrix basis = CMatrix::Zero(n, static_cast<Eigen::Index>(E.size()));
  for (std::size_t i = 0; i < E.size(); ++i) {
    basis(static_cast<Eigen::Index>(E[i]), static_cast<Eigen::Index>(i)) = 1.0 / std::sqrt(space.weight(E[i]));
  }
  const auto outs = family(basis);
  std::vector<double> norms(outs.size());
  parallel_for(outs.size(), [&](std::size_t k) {
    CMatrix m(static_cast<Eigen::Index>(F.size()), static_cast<Eigen::Index>(E.size()));
    for (std::size_t r = 0; r < F.size(); ++r) {
      m.row(static_cast<Eigen::Index>(r)) =
          std::sqrt(space.weight(F[r])) * outs[k].row(static_cast<Eigen::Index>(F[r]));
    }
    Eigen::JacobiSVD<CMatrix> svd(m);
    norms[k] = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  });
  return norms;
}

/// Measures sup ||T_t f||_{L2(F)} over unit f supported in E and fits the
/// order gamma in (1 + dist(E,F)^{2m}/t^{2m})^{-gamma} over t <= dist(E,F)/2.
/// The bound increases in t, so the fit is taken on the running max of the
/// norms, which zero crossings of the kernel cannot pull below it.
inline OffdiagReport measure_offdiag(const MetricMeasureSpace& space, const FamilySweep& family,
                                     const std::vector<std::size_t>& E, const std::vector<std::size_t>& F,
                                     const TGrid& grid, int order_2m, double floor = 1e-14) {
  if (E.empty() || F.empty()) throw InvalidArgument("measure_offdiag: empty set");
  OffdiagReport rep;
  rep.separation = space.set_distance(E, F);
  rep.t = grid.nodes();
  rep.norm = compressed_norms(space, family, E, F);
  const double D = rep.separation;
  rep.x.resize(rep.t.size());
  rep.used.assign(rep.t.size(), false);
  double cmax = 0.0;
  for (double v : rep.norm) cmax = std::max(cmax, v);
  if (D == 0.0) {
    rep.C = cmax;
    return rep;
  }
  int count = 0;
  rep.envelope.resize(rep.t.size());
  double run = 0.0;
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    run = std::max(run, rep.norm[k]);
    rep.envelope[k] = run;
    rep.x[k] = std::log1p(std::pow(D / rep.t[k], order_2m));
    rep.used[k] = rep.t[k] <= 0.5 * D && run > floor;
    count += rep.used[k];
  }
  if (count < 3) {
    rep.saturated = true;
    return rep;
  }
  std::tie(rep.gamma, rep.C) = fit_decay(rep.x, rep.envelope, rep.used);
  rep.fitted = true;
  return rep;
}

/// Family t |-> psi(t^{2m} L).
inline FamilySweep psi_family(const SectorialOperator& op, const PsiFunction& psi, const TGrid& grid,
                              const ContourOptions& opt = {}) {
  return [&op, psi, grid, opt](const CMatrix& v) { return apply_psi_grid(op, psi, grid, v, opt); };
}

/// Family t |-> e^{-t^{2m} L}.
inline FamilySweep semigroup_family(const SectorialOperator& op, const TGrid& grid,
                                    const SemigroupOptions& opt = {}) {
  return [&op, grid, opt](const CMatrix& v) {
    std::vector<double> s;
    for (double t : grid.nodes()) s.push_back(std::pow(t, op.order_2m()));
    return semigroup_grid(op, s, v, opt);
  };
}

// ---------------------------------------------------------------------------
// L^p - L^2 off-diagonal bounds

struct OffdiagLpReport {
  double p_tilde = 1.5;
  double sup_ratio = 0.0;        // with eps = 0
  double eps = 0.0;              // largest eps keeping the sup within twice its eps = 0 value
  std::vector<double> per_shell; // sup ratio for each annulus index j
};

/// Ratios ||e^{-tL} 1_{S_j(B)} f||_{L2(B)} / (2^{-j n/p} V(B)^{1/2-1/p} ||f||_{Lp(S_j(B))})
/// with r_B = t^{1/2m}, over the given balls and random f; the adjoint
/// operator gives the dual L^2 - L^q estimate.
inline OffdiagLpReport measure_offdiag_lp(const SectorialOperator& op, double p_tilde,
                                          const std::vector<Ball>& balls, int trials,
                                          std::uint64_t seed, bool use_adjoint = false,
                                          const SemigroupOptions& opt = {}) {
  if (!(p_tilde > 1.0 && p_tilde < 2.0)) throw InvalidArgument("measure_offdiag_lp: p must lie in (1,2)");
  const auto& sp = op.space();
  const double n = homogeneous_dimension(sp);
  OffdiagLpReport rep;
  rep.p_tilde = p_tilde;
  Rng rng(seed);
  const int jmax = static_cast<int>(std::ceil(std::log2(std::max(sp.diameter(), sp.spacing()) /
                                                        balls.front().radius))) + 1;
  rep.per_shell.assign(static_cast<std::size_t>(std::max(jmax, 0) + 1), 0.0);
  const OperatorPtr adj = use_adjoint ? adjoint_operator(op) : nullptr;
  const SectorialOperator& L = use_adjoint ? *adj : op;
  for (const Ball& ball : balls) {
    const double t = std::pow(ball.radius, op.order_2m());
    const auto inside = ball_points(sp, ball);
    const double vb = sp.measure_of(inside);
    const int jm = static_cast<int>(std::ceil(std::log2(std::max(sp.diameter(), sp.spacing()) / ball.radius))) + 1;
    for (int j = 0; j <= jm && j < static_cast<int>(rep.per_shell.size()); ++j) {
      const auto shell = annulus(sp, ball, j);
      if (shell.empty()) continue;
      CMatrix probes = CMatrix::Zero(static_cast<Eigen::Index>(sp.size()), trials);
      for (int c = 0; c < trials; ++c) {
        const CVector g = random_gaussian(static_cast<Eigen::Index>(shell.size()), rng);
        for (std::size_t i = 0; i < shell.size(); ++i) probes(static_cast<Eigen::Index>(shell[i]), c) = g[static_cast<Eigen::Index>(i)];
      }
      const CMatrix out = apply_semigroup(L, t, probes, opt);
      for (int c = 0; c < trials; ++c) {
        const double num = sp.norm_on(out.col(c), inside);
        const double den = std::exp2(-j * n / p_tilde) * std::pow(vb, 0.5 - 1.0 / p_tilde) *
                           sp.norm_on(probes.col(c), shell, p_tilde);
        rep.per_shell[static_cast<std::size_t>(j)] = std::max(rep.per_shell[static_cast<std::size_t>(j)], num / den);
      }
    }
  }
  for (double v : rep.per_shell) rep.sup_ratio = std::max(rep.sup_ratio, v);
  // largest eps with max_j per_shell[j] 2^{j eps} <= 2 sup_ratio
  double eps = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < rep.per_shell.size(); ++j) {
    if (rep.per_shell[j] > 0) eps = std::min(eps, std::log2(2.0 * rep.sup_ratio / rep.per_shell[j]) / double(j));
  }
  rep.eps = std::isfinite(eps) ? eps : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// conservation

struct ConservationReport {
  double semigroup_defect = 0.0;  // max_t ||e^{-t^{2m}L} 1 - 1||
  double psi_of_one = 0.0;        // max_t ||psi(t^{2m}L) 1||
};

inline ConservationReport conservation_check(const SectorialOperator& op, const PsiFunction& psi,
                                             const TGrid& grid, const ContourOptions& copt = {},
                                             const SemigroupOptions& sopt = {}) {
  if (!(psi.alpha() > 0.0)) throw HypothesisViolated("conservation_check: psi must vanish at 0 (alpha > 0)");
  const auto& sp = op.space();
  const CMatrix one = CMatrix::Ones(static_cast<Eigen::Index>(sp.size()), 1);
  ConservationReport rep;
  std::vector<double> s;
  for (double t : grid.nodes()) s.push_back(std::pow(t, op.order_2m()));
  for (const auto& e : semigroup_grid(op, s, one, sopt)) {
    rep.semigroup_defect = std::max(rep.semigroup_defect, sp.norm(CVector(e.col(0) - one.col(0))));
  }
  for (const auto& y : apply_psi_grid(op, psi, grid, one, copt)) {
    rep.psi_of_one = std::max(rep.psi_of_one, sp.norm(CVector(y.col(0))));
  }
  return rep;
}

}  // namespace paralab

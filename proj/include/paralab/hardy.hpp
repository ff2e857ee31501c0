#pragma once
// Hardy and BMO norms attached to L, molecules, and the Carleson-measure
// description of BMO_L.

#include "paralab/tent.hpp"

#include <boost/math/special_functions/binomial.hpp>

namespace paralab {

/// n / 4m with n the measured homogeneous dimension.
inline double critical_order(const SectorialOperator& op) {
  return homogeneous_dimension(op.space()) / (2.0 * op.order_2m());
}

/// Smallest integer M > n / 4m.
inline int default_bmo_order(const SectorialOperator& op) {
  return static_cast<int>(std::floor(critical_order(op))) + 1;
}

/// psi(t_k^{2m} L) f for every grid node, as a field.
inline FieldFunction psi_field(const SectorialOperator& op, const PsiFunction& psi, const CVector& f,
                               const TGrid& grid, const ContourOptions& opt = {}) {
  const auto ys = apply_psi_grid(op, psi, grid, CMatrix(f), opt);
  CMatrix v(static_cast<Eigen::Index>(op.size()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < ys.size(); ++k) v.col(static_cast<Eigen::Index>(k)) = ys[k].col(0);
  return {v, grid};
}

// ---------------------------------------------------------------------------
// H^p

struct HardyNormReport {
  double p = 1.0;
  std::string psi;
  double value = 0.0;
  TGrid grid;
  double refinement_delta = 0.0;  // relative change against the half-q subgrid; NaN for odd q
};

/// Rejects psi whose decay orders miss the square-function characterization:
/// p <= 2 needs order beta > n/4m at infinity, p >= 2 needs order alpha > n/4m at 0.
inline void require_hardy_decay(const SectorialOperator& op, const PsiFunction& psi, double p) {
  const double crit = critical_order(op);
  const bool low = psi.alpha() > 0.0 && psi.beta() > crit;
  const bool high = psi.alpha() > crit && psi.beta() > 0.0;
  if (p < 2.0 && !low) {
    throw HypothesisViolated("hardy_norm: p < 2 needs beta > n/4m, got beta = " + std::to_string(psi.beta()) +
                             " <= " + std::to_string(crit));
  }
  if (p > 2.0 && !high) {
    throw HypothesisViolated("hardy_norm: p > 2 needs alpha > n/4m, got alpha = " + std::to_string(psi.alpha()) +
                             " <= " + std::to_string(crit));
  }
  if (p == 2.0 && !low && !high) {
    throw HypothesisViolated("hardy_norm: p = 2 needs alpha > n/4m or beta > n/4m");
  }
}

/// ||A(psi(t^{2m} L) f)||_{L^p}.
inline HardyNormReport hardy_norm(const SectorialOperator& op, const CVector& f, double p, const PsiFunction& psi,
                                  const TGrid& grid, const ContourOptions& opt = {}) {
  if (!(p >= 1.0) || std::isinf(p)) throw InvalidArgument("hardy_norm: p must lie in [1, inf)");
  require_hardy_decay(op, psi, p);
  const FieldFunction F = psi_field(op, psi, f, grid, opt);
  HardyNormReport rep;
  rep.p = p;
  rep.psi = psi.label();
  rep.grid = grid;
  rep.value = tent_norm(op.space(), F, p);
  if (grid.q() % 2 == 0) {
    const TGrid half = grid.with_q(grid.q() / 2);
    CMatrix sub(F.values.rows(), static_cast<Eigen::Index>(half.size()));
    for (Eigen::Index k = 0; k < sub.cols(); ++k) sub.col(k) = F.values.col(2 * k);
    const double coarse = tent_norm(op.space(), {sub, half}, p);
    rep.refinement_delta = rep.value > 0.0 ? std::abs(rep.value - coarse) / rep.value : 0.0;
  } else {
    rep.refinement_delta = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// BMO_L

struct BmoReport {
  double value = 0.0;
  int M = 1;
  bool order_ok = true;  // M > n/4m
  Ball argmax{0, 0.0};
};

/// Radii k h, k = 1 .. max lattice distance + 1; the last ball is X.
inline std::vector<double> lattice_radii(const MetricMeasureSpace& space) {
  std::vector<double> r;
  for (int k = 1; k <= space.max_lattice_distance() + 1; ++k) r.push_back(k * space.spacing());
  return r;
}

/// sup over balls of (avg_B |(I - e^{-r_B^{2m} L})^M f|^2)^{1/2}, balls being
/// every center with the given radii (default: lattice_radii).
inline BmoReport bmo_report(const SectorialOperator& op, const CVector& f, int M, std::vector<double> radii = {},
                            const SemigroupOptions& opt = {}) {
  if (M < 1) throw InvalidArgument("bmo_norm: M must be >= 1");
  const auto& space = op.space();
  if (radii.empty()) radii = lattice_radii(space);
  BmoReport rep;
  rep.M = M;
  rep.order_ok = M > critical_order(op);
  // (1 - e^{-s z})^M expanded as sum_j binom(M, j) (-1)^j e^{-j s z}
  std::vector<double> times;
  for (double r : radii) {
    if (!(r > 0.0)) throw InvalidArgument("bmo_norm: radii must be > 0");
    for (int j = 1; j <= M; ++j) times.push_back(j * std::pow(r, op.order_2m()));
  }
  const auto heat = semigroup_grid(op, times, CMatrix(f), opt);
  const RVector ones = RVector::Ones(static_cast<Eigen::Index>(space.size()));
  double best = -1.0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    CVector g = f;
    for (int j = 1; j <= M; ++j) {
      const double c = boost::math::binomial_coefficient<double>(static_cast<unsigned>(M), static_cast<unsigned>(j));
      g += ((j % 2) ? -c : c) * heat[i * static_cast<std::size_t>(M) + static_cast<std::size_t>(j - 1)].col(0);
    }
    const int shells = space.shells_below(radii[i]);
    const RVector avg = detail::ball_mass(space, shells, g.cwiseAbs2()).cwiseQuotient(detail::ball_mass(space, shells, ones));
    Eigen::Index at = 0;
    const double m = avg.maxCoeff(&at);
    if (m > best) {
      best = m;
      rep.argmax = {static_cast<std::size_t>(at), radii[i]};
    }
  }
  rep.value = std::sqrt(std::max(best, 0.0));
  return rep;
}

inline double bmo_norm(const SectorialOperator& op, const CVector& f, int M, std::vector<double> radii = {},
                       const SemigroupOptions& opt = {}) {
  return bmo_report(op, f, M, std::move(radii), opt).value;
}

/// BMO norms for M0 = default_bmo_order and M0 + 1; on finite spaces they
/// differ, and the spread is what gets reported.
inline std::pair<double, double> bmo_spread(const SectorialOperator& op, const CVector& f,
                                            const SemigroupOptions& opt = {}) {
  const int M0 = default_bmo_order(op);
  return {bmo_norm(op, f, M0, {}, opt), bmo_norm(op, f, M0 + 1, {}, opt)};
}

// ---------------------------------------------------------------------------
// molecules

struct Molecule {
  CVector m;
  CVector b;  // witness, m = L^M b
  Ball ball{0, 1.0};
  int M = 1;
  double eps = 1.0;
  RMatrix ratios;  // (M + 1) x (J + 1): k by annulus j
  double witness_residual = 0.0;
  double max_ratio = 0.0;
  bool valid = false;
};

/// Largest annulus index checked: log2(diam / r_B) + 1, farther shells being empty.
inline int molecule_annuli(const MetricMeasureSpace& space, const Ball& ball) {
  return std::max(0, static_cast<int>(std::floor(std::log2(space.diameter() / ball.radius))) + 1);
}

/// ||(r^{2m} L)^k b||_{L2(S_j)} / (r^{2mM} 2^{-j eps} V(2^j B)^{-1/2}).
inline RMatrix molecule_ratios(const SectorialOperator& op, const CVector& b, const Ball& ball, int M, double eps) {
  const auto& space = op.space();
  const int J = molecule_annuli(space, ball);
  const double s = std::pow(ball.radius, op.order_2m());
  RMatrix out = RMatrix::Zero(M + 1, J + 1);
  std::vector<std::vector<std::size_t>> shells(static_cast<std::size_t>(J) + 1);
  std::vector<double> vols(static_cast<std::size_t>(J) + 1);
  for (int j = 0; j <= J; ++j) {
    shells[static_cast<std::size_t>(j)] = annulus(space, ball, j);
    vols[static_cast<std::size_t>(j)] = ball_volume(space, ball.scaled(std::ldexp(1.0, j)));
  }
  CVector lk = b;
  for (int k = 0; k <= M; ++k) {
    if (k > 0) lk = s * op.apply(lk);
    for (int j = 0; j <= J; ++j) {
      const auto& S = shells[static_cast<std::size_t>(j)];
      if (S.empty()) continue;
      const double bound = std::pow(s, M) * std::exp2(-j * eps) / std::sqrt(vols[static_cast<std::size_t>(j)]);
      out(k, j) = space.norm_on(lk, S) / bound;
    }
  }
  return out;
}

/// Verifies a candidate (1,2,M,eps)-molecule m with witness b.
inline Molecule molecule_check(const SectorialOperator& op, const CVector& m, const CVector& b, const Ball& ball,
                               int M, double eps) {
  if (M < 1) throw InvalidArgument("molecule_check: M must be >= 1");
  if (!(eps > 0.0)) throw InvalidArgument("molecule_check: eps must be > 0");
  CVector lm = b;
  for (int k = 0; k < M; ++k) lm = op.apply(lm);
  const double mn = op.space().norm(m);
  const double res = op.space().norm(CVector(m - lm));
  if (res > 1e-6 * mn || (mn == 0.0 && res > 0.0)) {
    throw InvalidArgument("molecule_check: witness mismatch, ||m - L^M b|| = " + std::to_string(res) +
                          " against ||m|| = " + std::to_string(mn));
  }
  Molecule mol;
  mol.m = m;
  mol.b = b;
  mol.ball = ball;
  mol.M = M;
  mol.eps = eps;
  mol.witness_residual = mn > 0.0 ? res / mn : 0.0;
  mol.ratios = molecule_ratios(op, b, ball, M, eps);
  mol.max_ratio = mol.ratios.maxCoeff();
  mol.valid = mol.max_ratio <= 1.0 + 1e-6;
  return mol;
}

/// b = c e^{-r_B^{2m} L}(1_B / V(B)^{1/2}), m = L^M b, with c the largest
/// scale keeping every molecule ratio <= 1.
inline Molecule molecule_make(const SectorialOperator& op, const Ball& ball, int M, double eps,
                              const SemigroupOptions& opt = {}) {
  if (M < 1) throw InvalidArgument("molecule_make: M must be >= 1");
  if (!(eps > 0.0)) throw InvalidArgument("molecule_make: eps must be > 0");
  if (!(ball.radius > 0.0)) throw InvalidArgument("molecule_make: radius must be > 0");
  const auto& space = op.space();
  CVector ind = CVector::Zero(static_cast<Eigen::Index>(space.size()));
  const auto members = ball_points(space, ball);
  const double v = space.measure_of(members);
  for (auto y : members) ind[static_cast<Eigen::Index>(y)] = 1.0 / std::sqrt(v);
  CVector b = apply_semigroup(op, std::pow(ball.radius, op.order_2m()), CMatrix(ind), opt).col(0);
  const double peak = molecule_ratios(op, b, ball, M, eps).maxCoeff();
  if (!(peak > 0.0)) throw NumericalFailure("molecule_make: zero candidate");
  b /= peak;
  CVector m = b;
  for (int k = 0; k < M; ++k) m = op.apply(m);
  if (op.space().norm(m) == 0.0) throw NumericalFailure("molecule_make: L^M b vanishes");
  return molecule_check(op, m, b, ball, M, eps);
}

// ---------------------------------------------------------------------------
// Carleson measures and BMO

struct CarlesonReport {
  double carleson = 0.0;  // ||nu_{psi,b}||_C
  double bmo2 = 0.0;      // ||b||_BMO^2
  double ratio = 0.0;     // carleson / bmo2
  bool vacuous = false;   // both sides vanish
  bool inconsistent = false;  // bmo2 vanishes while carleson does not
  bool order_ok = true;   // M > n/4m
};

/// Both sides of the Carleson characterization of BMO_L: the Carleson norm of
/// |psi(t^{2m}L) b|^2 dmu dt/t and ||b||^2_BMO. psi must vanish at 0 to an
/// order alpha > n/4m.
inline CarlesonReport carleson_characterization(const SectorialOperator& op, const PsiFunction& psi,
                                                const CVector& b, const TGrid& grid, int M,
                                                const ContourOptions& copt = {},
                                                const SemigroupOptions& sopt = {}) {
  const double crit = critical_order(op);
  if (!(psi.alpha() > crit)) {
    throw HypothesisViolated("carleson_characterization: needs alpha > n/4m, got alpha = " +
                             std::to_string(psi.alpha()) + " <= " + std::to_string(crit));
  }
  CarlesonReport rep;
  const FieldFunction F = psi_field(op, psi, b, grid, copt);
  rep.carleson = carleson_norm(op.space(), F.abs2(), grid);
  const BmoReport bmo = bmo_report(op, b, M, {}, sopt);
  rep.order_ok = bmo.order_ok;
  rep.bmo2 = bmo.value * bmo.value;
  const double scale = std::max(1.0, b.cwiseAbs2().maxCoeff());
  const double tol = 1e-20 * scale;
  if (rep.bmo2 <= tol) {
    rep.vacuous = rep.carleson <= tol;
    rep.inconsistent = !rep.vacuous;
    return rep;
  }
  rep.ratio = rep.carleson / rep.bmo2;
  return rep;
}

struct PairingReport {
  Complex pairing;   // <f, g>
  Complex integral;  // sum_k <psi(t_k^{2m} L^*) f, psi~(t_k^{2m} L) g> 2m dlog
  double residual = 0.0;
};

/// Truncated reproducing formula for the pairing <f, g>.
inline PairingReport reproducing_pairing_check(const SectorialOperator& op, const PsiFunction& psi,
                                               const PsiFunction& psi_tilde, const CVector& f, const CVector& g,
                                               const TGrid& grid, const ContourOptions& opt = {}) {
  const double crit = critical_order(op);
  if (!(psi.alpha() + psi_tilde.alpha() > crit)) {
    throw HypothesisViolated("reproducing_pairing_check: needs alpha1 + alpha2 > n/4m");
  }
  const Complex norm = pairing_integral(psi, psi_tilde);
  if (std::abs(norm - 1.0) > 1e-8) {
    throw InvalidArgument("reproducing_pairing_check: psi pair is not normalized (integral " +
                          std::to_string(norm.real()) + ")");
  }
  const auto& space = op.space();
  const OperatorPtr adj = adjoint_operator(op);
  const auto a = apply_psi_grid(*adj, psi, grid, CMatrix(f), opt);
  const auto c = apply_psi_grid(op, psi_tilde, grid, CMatrix(g), opt);
  PairingReport rep;
  rep.pairing = space.inner(f, g);
  Complex acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += space.inner(a[k].col(0), c[k].col(0));
  rep.integral = double(op.order_2m()) * grid.dlog() * acc;
  rep.residual = std::abs(rep.pairing - rep.integral);
  return rep;
}

}  // namespace paralab

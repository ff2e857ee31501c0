#include "paralab/calculus.hpp"

#include <gtest/gtest.h>

using namespace paralab;

namespace {

OperatorPtr periodic_line(int n, Complex a = 1.0) {
  return build_divergence_form(build_grid_space({n}, 1.0 / n, Topology::periodic), a, Boundary::periodic);
}

OperatorPtr random_square(int n, std::uint64_t seed, Boundary b = Boundary::periodic) {
  auto sp = build_grid_space({n, n}, 1.0 / n, b == Boundary::periodic ? Topology::periodic : Topology::bounded);
  const auto edges = grid_edges(*sp, b).size();
  return build_divergence_form(sp, CoefficientField::random(edges, 0.3, 0.7, seed), b);
}

}  // namespace

TEST(Calculus, EigenpairIdentity) {
  // eigenvalue exactly 1: rescale the operator by 1 / lambda_k
  auto base = periodic_line(16);
  const auto& o0 = base->oracle();
  Eigen::Index k = 0;
  while (std::abs(o0.eigenvalues[k]) < 1.0) ++k;
  auto op = operator_scaled(*base, 1.0 / o0.eigenvalues[k].real());
  const CMatrix v = op->oracle().vectors.col(k);
  const CMatrix y = apply_psi(*op, PsiFunction::exp_monomial(1), 1.0, v);
  EXPECT_LE(relative_error(y, v * std::exp(-1.0)), 1e-8);
}

TEST(Calculus, AnnihilatesConstants) {
  auto op = periodic_line(32);
  const CMatrix one = CMatrix::Ones(32, 1);
  EXPECT_LE(max_abs(CVector(apply_psi(*op, PsiFunction::exp_monomial(1), 0.05, one))), 1e-10);
}

TEST(Calculus, MatchesOracleSelfAdjoint) {
  auto op = periodic_line(64);
  Rng rng(1);
  for (const auto& psi : {PsiFunction::exp_monomial(1), PsiFunction::rational(2, 2), PsiFunction::exp_monomial(0.5).times(PsiFunction::rational(1, 1))}) {
    for (double t : {1e-3, 0.02, 0.3}) {
      const CMatrix f = random_gaussian(64, rng);
      EXPECT_LE(relative_error(apply_psi(*op, psi, t, f), oracle_psi(*op, psi, t, f)), 1e-8)
          << psi.label() << " t=" << t;
    }
  }
}

TEST(Calculus, MatchesOracleNonSelfAdjoint) {
  auto op = random_square(10, 3);
  ASSERT_FALSE(op->self_adjoint());
  Rng rng(2);
  for (const auto& psi : {PsiFunction::exp_monomial(2), PsiFunction::rational(1, 3)}) {
    for (double t : {0.01, 0.1}) {
      const CMatrix f = random_gaussian(100, rng);
      EXPECT_LE(relative_error(apply_psi(*op, psi, t, f), oracle_psi(*op, psi, t, f)), 1e-8);
    }
  }
}

TEST(Calculus, GridSweepMatchesSingleApplications) {
  auto op = random_square(8, 4, Boundary::dirichlet);
  const TGrid grid(0.01, 0.5, 4);
  Rng rng(3);
  const CMatrix f = random_gaussian(64, rng);
  const auto psi = PsiFunction::exp_monomial(1);
  const auto ys = apply_psi_grid(*op, psi, grid, f);
  for (std::size_t k = 0; k < grid.size(); k += 5) {
    EXPECT_LE(relative_error(ys[k], oracle_psi(*op, psi, grid[k], f)), 1e-8);
  }
  std::vector<CMatrix> vs;
  CMatrix ref = CMatrix::Zero(64, 1);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    vs.push_back(random_gaussian(64, rng));
    ref += oracle_psi(*op, psi, grid[k], vs.back());
  }
  EXPECT_LE(relative_error(accumulate_psi_grid(*op, psi, grid, vs), ref), 1e-8);
}

TEST(Calculus, ScalingCovariance) {
  auto op = random_square(8, 5);
  auto scaled = operator_scaled(*op, 9.0);
  Rng rng(4);
  const CMatrix f = random_gaussian(64, rng);
  const auto psi = PsiFunction::rational(2, 1);
  const CMatrix a = apply_psi(*op, psi, 0.05, f);
  const CMatrix b = apply_psi(*scaled, psi, 0.05 / 3.0, f);
  EXPECT_LE(relative_error(b, a), 1e-9);
}

TEST(Calculus, Commutation) {
  auto op = random_square(8, 6);
  Rng rng(5);
  const CMatrix f = random_gaussian(64, rng);
  const auto p1 = PsiFunction::exp_monomial(1), p2 = PsiFunction::rational(1, 2);
  const CMatrix ab = apply_psi(*op, p1, 0.03, apply_psi(*op, p2, 0.1, f));
  const CMatrix ba = apply_psi(*op, p2, 0.1, apply_psi(*op, p1, 0.03, f));
  EXPECT_LE(relative_error(ab, ba), 1e-8);
}

TEST(Calculus, SemigroupPaths) {
  auto op = random_square(8, 7);
  Rng rng(6);
  const CMatrix f = random_gaussian(64, rng);
  SemigroupOptions contour;
  contour.path = SemigroupPath::contour;
  for (double t : {1e-4, 3e-3, 0.05}) {
    const CMatrix ref = op->oracle().apply([t](Complex l) { return std::exp(-t * l); }, f);
    EXPECT_LE(relative_error(apply_semigroup(*op, t, f), ref), 1e-10);
    EXPECT_LE(relative_error(apply_semigroup(*op, t, f, contour), ref), 1e-8);
  }
  const CMatrix one = CMatrix::Ones(64, 1);
  EXPECT_LE(max_abs(CVector(apply_semigroup(*op, 0.1, one, contour) - one)), 1e-9);
  EXPECT_LE(max_abs(CVector(apply_semigroup(*op, 0.1, one) - one)), 1e-9);
}

TEST(Calculus, SemigroupSmallTimeTaylor) {
  auto op = periodic_line(64);
  CMatrix f(64, 1);
  for (int i = 0; i < 64; ++i) f(i, 0) = std::sin(2 * kPi * i / 64.0) + 0.3 * std::cos(4 * kPi * i / 64.0);
  const double lf = op->apply(f).norm();
  for (double t : {1e-3, 1e-4, 1e-5}) {
    EXPECT_LE((apply_semigroup(*op, t, f) - f).norm(), 1.01 * t * lf);
  }
}

TEST(Calculus, FractionalPowers) {
  auto base = periodic_line(16);
  const auto& o0 = base->oracle();
  Eigen::Index k = 0;
  while (std::abs(o0.eigenvalues[k]) < 1.0) ++k;
  auto op = operator_scaled(*base, 4.0 / o0.eigenvalues[k].real());
  const CMatrix v = op->oracle().vectors.col(k);
  EXPECT_LE(relative_error(apply_fractional_power(*op, 1.0, v), 2.0 * v), 1e-12);

  auto sq = random_square(7, 8);
  Rng rng(7);
  const CMatrix f = random_gaussian(49, rng);
  const CMatrix Lf = sq->apply(f);
  EXPECT_LE(relative_error(apply_fractional_power(*sq, 2.0, f), Lf), 1e-9);
  for (double s : {0.5, 1.0, 1.5}) {
    const CMatrix a = apply_fractional_power(*sq, s, apply_fractional_power(*sq, 2.0 - s, f));
    EXPECT_LE(relative_error(a, Lf), 1e-8);
  }
  SemigroupOptions contour;
  contour.path = SemigroupPath::contour;
  for (double s : {0.5, 1.5, 3.0}) {
    EXPECT_LE(relative_error(apply_fractional_power(*sq, s, f, contour), apply_fractional_power(*sq, s, f)), 1e-8);
  }
}

TEST(Calculus, QuadraticNormClosedForm) {
  auto op = periodic_line(64);
  const auto [lmin, lmax] = op->spectral_range();
  const TGrid grid(1e-3 / lmax, 1e3 / lmin, 16);
  Rng rng(8);
  const CMatrix f = random_gaussian(64, rng) * CVector::Ones(4).transpose() + CMatrix(random_gaussian(64 * 4, rng)).reshaped(64, 4);
  const RVector qn = quadratic_norm(*op, PsiFunction::exp_monomial(1), f, grid);
  const CMatrix Qf = op->project_range(f);
  for (Eigen::Index c = 0; c < 4; ++c) {
    const double ratio = qn[c] * qn[c] / std::pow(op->space().norm(Qf.col(c)), 2);
    EXPECT_NEAR(ratio, 0.25, 0.25 * 0.02);
  }
  const RVector q2 = quadratic_norm(*op, PsiFunction::exp_monomial(1), f, grid.with_q(32));
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(q2[c] / qn[c], 1.0, 1e-3);
  EXPECT_LE(quadratic_norm(*op, PsiFunction::exp_monomial(1), CMatrix::Ones(64, 1), grid)[0], 1e-9);
}

TEST(Calculus, CalderonReconstruction) {
  auto op = periodic_line(64);
  const auto psi = PsiFunction::exp_monomial(1);
  const auto pt = normalize_pair(psi, psi);
  const TGrid grid = default_tgrid(*op);
  Rng rng(9);
  const CMatrix f = random_gaussian(64, rng);
  const auto r = calderon_reconstruct(*op, psi, pt, f, grid);
  EXPECT_LE(r.residual, 1e-3);
  const auto wider = calderon_reconstruct(*op, psi, pt, f, grid.widened(2.0));
  EXPECT_LT(wider.residual, r.residual);
  // per-eigenvalue scalar quadrature oracle
  const double w = 2.0 * grid.dlog();
  const CMatrix ref = op->oracle().apply(
      [&](Complex l) {
        Complex acc = 0.0;
        for (double t : grid.nodes()) acc += psi(t * t * l) * pt(t * t * l);
        return w * acc;
      },
      f);
  EXPECT_LE(relative_error(r.result, ref), 1e-9);
  const auto c = calderon_reconstruct(*op, psi, pt, CMatrix::Ones(64, 1), grid);
  EXPECT_LE(c.result.norm(), 1e-10);
}

TEST(Calculus, OffdiagRationalOrder) {
  // the decay regime needs t well below dist(E, F), so the separation spans
  // many lattice steps
  auto op = periodic_line(256);
  const auto& sp = op->space();
  std::vector<std::size_t> E, F;
  for (std::size_t i = 0; i < 16; ++i) E.push_back(i);
  for (std::size_t i = 80; i < 96; ++i) F.push_back(i);
  const TGrid grid(1.0 / 256, 1.0, 4);
  const auto rep = measure_offdiag(sp, psi_family(*op, PsiFunction::rational(2, 2), grid), E, F, grid, 2);
  ASSERT_TRUE(rep.fitted);
  EXPECT_GE(rep.gamma, 1.7);
  const auto heat = measure_offdiag(sp, semigroup_family(*op, grid), E, F, grid, 2);
  ASSERT_TRUE(heat.fitted);
  EXPECT_GT(heat.gamma, rep.gamma);
  const auto same = measure_offdiag(sp, semigroup_family(*op, grid), E, E, grid, 2);
  EXPECT_FALSE(same.fitted);
  EXPECT_LE(same.C, 1.0 + 1e-9);
}

TEST(Calculus, Conservation) {
  auto op = random_square(8, 9);
  const TGrid grid = default_tgrid(*op, 4);
  const auto rep = conservation_check(*op, PsiFunction::exp_monomial(1), grid);
  EXPECT_LE(rep.semigroup_defect, 1e-9);
  EXPECT_LE(rep.psi_of_one, 1e-9);
  auto dir = random_square(8, 9, Boundary::dirichlet);
  const auto d = conservation_check(*dir, PsiFunction::exp_monomial(1), default_tgrid(*dir, 4));
  EXPECT_GT(d.semigroup_defect, 1e-3);
}

TEST(Calculus, OffdiagLp) {
  auto op = periodic_line(64);
  std::vector<Ball> balls{{0, 2.0 / 64}, {20, 2.0 / 64}};
  const auto rep = measure_offdiag_lp(*op, 1.5, balls, 4, 1);
  EXPECT_TRUE(std::isfinite(rep.sup_ratio));
  EXPECT_GT(rep.sup_ratio, 0.0);
  EXPECT_GE(rep.eps, 0.0);
}

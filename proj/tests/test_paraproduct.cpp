#include "paralab/paraproduct.hpp"

#include <gtest/gtest.h>

using namespace paralab;

namespace {

OperatorPtr periodic_line(int n, Complex a = 1.0) {
  return build_divergence_form(build_grid_space({n}, 1.0 / n, Topology::periodic), a, Boundary::periodic);
}

OperatorPtr complex_line(int n, std::uint64_t seed) {
  auto sp = build_grid_space({n}, 1.0 / n, Topology::periodic);
  return build_divergence_form(sp, CoefficientField::random(grid_edges(*sp, Boundary::periodic).size(), 0.3, 0.5, seed),
                               Boundary::periodic);
}

OperatorPtr dirichlet_line(int n) {
  return build_divergence_form(build_grid_space({n}, 1.0 / n, Topology::bounded), 1.0, Boundary::dirichlet);
}

ParaproductSpec pair_spec(const SectorialOperator& op, int q = 8, double a = 1.0) {
  const auto psi = PsiFunction::exp_monomial(a);
  return make_paraproduct_spec(op, psi, normalize_pair(psi, psi), default_tgrid(op, q, 1e-4, 40.0));
}

double l2(const SectorialOperator& op, const CVector& v) { return op.space().norm(v); }

}  // namespace

TEST(Paraproduct, AveragingMatchesPointwiseAverage) {
  auto op = complex_line(24, 1);
  Rng rng(1);
  CMatrix F(24, 3);
  for (int c = 0; c < 3; ++c) F.col(c) = random_gaussian(24, rng);
  for (double t : {0.01, 0.1, 0.3, 2.0}) {
    const CMatrix A = detail::average_columns(op->space(), t, F);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE((A.col(c) - average(op->space(), t, F.col(c))).norm(), 1e-13 * F.norm());
    }
    const CMatrix B = detail::average_adjoint_columns(op->space(), t, F);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE((B.col(c) - average_adjoint(op->space(), t, F.col(c))).norm(), 1e-13 * F.norm());
    }
  }
}

TEST(Paraproduct, SemigroupAccumulateMatchesSum) {
  auto op = complex_line(40, 2);
  Rng rng(2);
  const std::vector<double> times = {1e-4, 3e-3, 0.05, 1.0};
  std::vector<CMatrix> vs;
  CMatrix expect = CMatrix::Zero(40, 2);
  for (double s : times) {
    CMatrix v(40, 2);
    v.col(0) = random_gaussian(40, rng);
    v.col(1) = random_gaussian(40, rng);
    expect += apply_semigroup(*op, s, v);
    vs.push_back(v);
  }
  SemigroupOptions contour;
  contour.path = SemigroupPath::contour;
  EXPECT_LE((semigroup_accumulate(*op, times, vs) - expect).norm(), 1e-11 * expect.norm());
  EXPECT_LE((semigroup_accumulate(*op, times, vs, contour) - expect).norm(), 1e-8 * expect.norm());
}

TEST(Paraproduct, MatchesDirectSum) {
  // oracle evaluation of every term of the t-sum
  auto op = complex_line(32, 3);
  const auto spec = pair_spec(*op);
  Rng rng(3);
  const CVector b = random_gaussian(32, rng), f = random_gaussian(32, rng);
  CVector expect = CVector::Zero(32);
  const double w = 2.0 * spec.grid.dlog();
  for (std::size_t k = 0; k < spec.grid.size(); ++k) {
    const double t = spec.grid[k];
    const CVector y = oracle_psi(*op, spec.psi, t, CMatrix(b)).col(0);
    const CVector z = average(op->space(), t, op->oracle().apply([&](Complex l) { return std::exp(-t * t * l); }, CMatrix(f)).col(0));
    expect += w * oracle_psi(*op, spec.psi_tilde, t, CMatrix(CVector(y.cwiseProduct(z)))).col(0);
  }
  const CVector got = paraproduct_apply(*op, spec, b, CMatrix(f)).col(0);
  EXPECT_LE(relative_error(got, expect), 1e-8);
}

TEST(Paraproduct, ConstantSymbolVanishes) {
  auto op = periodic_line(32);
  const auto spec = pair_spec(*op);
  Rng rng(4);
  CMatrix F(32, 3);
  for (int c = 0; c < 3; ++c) F.col(c) = random_gaussian(32, rng);
  const CVector b = CVector::Constant(32, Complex(1.5, -0.5));
  EXPECT_LE(paraproduct_apply(*op, spec, b, F).norm(), 1e-10 * F.norm());
  EXPECT_LE(paraproduct_adjoint_apply(*op, spec, b, F).norm(), 1e-10 * F.norm());
}

TEST(Paraproduct, Bilinear) {
  auto op = complex_line(32, 5);
  const auto spec = pair_spec(*op);
  Rng rng(5);
  const CVector b1 = random_gaussian(32, rng), b2 = random_gaussian(32, rng);
  const CVector f1 = random_gaussian(32, rng), f2 = random_gaussian(32, rng);
  const Complex a(0.7, -1.3);
  const CVector lhs_b = paraproduct_apply(*op, spec, CVector(b1 + a * b2), CMatrix(f1)).col(0);
  const CVector rhs_b = paraproduct_apply(*op, spec, b1, CMatrix(f1)).col(0) +
                        a * paraproduct_apply(*op, spec, b2, CMatrix(f1)).col(0);
  EXPECT_LE(relative_error(lhs_b, rhs_b), 1e-12);
  const CVector lhs_f = paraproduct_apply(*op, spec, b1, CMatrix(CVector(f1 + a * f2))).col(0);
  const CVector rhs_f = paraproduct_apply(*op, spec, b1, CMatrix(f1)).col(0) +
                        a * paraproduct_apply(*op, spec, b1, CMatrix(f2)).col(0);
  EXPECT_LE(relative_error(lhs_f, rhs_f), 1e-12);
}

TEST(Paraproduct, BatchedColumnsMatchSingle) {
  auto op = periodic_line(24);
  const auto spec = pair_spec(*op);
  Rng rng(6);
  const CVector b = random_gaussian(24, rng);
  CMatrix F(24, 40);
  for (int c = 0; c < 40; ++c) F.col(c) = random_gaussian(24, rng);
  const CMatrix all = paraproduct_apply(*op, spec, b, F);
  for (int c : {0, 31, 32, 39}) {
    EXPECT_LE(relative_error(all.col(c), paraproduct_apply(*op, spec, b, CMatrix(F.col(c))).col(0)), 1e-13);
  }
}

TEST(Paraproduct, AdjointIdentity) {
  for (auto op : {complex_line(32, 7), dirichlet_line(24)}) {
    const auto spec = pair_spec(*op);
    const auto& sp = op->space();
    const auto n = static_cast<Eigen::Index>(op->size());
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const CVector b = random_gaussian(n, rng), f = random_gaussian(n, rng), g = random_gaussian(n, rng);
      const Complex lhs = sp.inner(paraproduct_apply(*op, spec, b, CMatrix(f)).col(0), g);
      const Complex rhs = sp.inner(f, paraproduct_adjoint_apply(*op, spec, b, CMatrix(g)).col(0));
      EXPECT_LE(std::abs(lhs - rhs), 1e-8 * l2(*op, b) * l2(*op, f) * l2(*op, g));
    }
  }
}

TEST(Paraproduct, DualOfSecondSlot) {
  auto op = complex_line(32, 8);
  const auto spec = pair_spec(*op);
  const auto& sp = op->space();
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const CVector f = random_uniform_real(32, rng), g = random_gaussian(32, rng), h = random_gaussian(32, rng);
    const Complex lhs = sp.inner(para_bilinear(*op, spec, CMatrix(f), CMatrix(g)).col(0), h);
    const Complex rhs = sp.inner(g, para_dual(*op, spec, f, CMatrix(h)).col(0));
    EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::abs(lhs) + 1e-12 * l2(*op, g) * l2(*op, h));
  }
}

TEST(Paraproduct, KernelComponentVanishes) {
  auto op = complex_line(32, 9);
  const auto spec = pair_spec(*op);
  Rng rng(9);
  const CVector b = random_gaussian(32, rng);
  CMatrix F(32, 4);
  for (int c = 0; c < 4; ++c) F.col(c) = random_gaussian(32, rng);
  const CMatrix out = paraproduct_apply(*op, spec, b, F);
  EXPECT_LE(op->project_kernel(out).norm(), 1e-10 * std::max(1.0, out.norm()));
}

TEST(Paraproduct, IdentityAtOne) {
  auto op = periodic_line(64);
  const auto spec = pair_spec(*op, 16);
  Rng rng(10);
  const CVector b = random_uniform_real(64, rng);
  const auto rep = para_identity_check(*op, spec, b);
  const CVector Qb = op->project_range(CMatrix(b)).col(0);
  EXPECT_TRUE(rep.within_budget);
  EXPECT_LE(rep.residual, 1e-2 * l2(*op, Qb));
  EXPECT_LE(rep.conservation_residual, 1e-12);
  EXPECT_LE(rep.adjoint_ratio, 1e-2);
}

TEST(Paraproduct, IdentityBudgetHoldsWithoutConservation) {
  // Dirichlet: e^{-tL} 1 != 1, so the conservation term carries the budget
  auto op = dirichlet_line(48);
  const auto spec = pair_spec(*op, 8);
  Rng rng(11);
  const auto rep = para_identity_check(*op, spec, random_uniform_real(48, rng));
  EXPECT_GT(rep.conservation_residual, 1e-3);
  EXPECT_TRUE(rep.within_budget);
}

TEST(Paraproduct, LinfL2ConstantProbesReproduce) {
  auto op = periodic_line(48);
  const auto spec = pair_spec(*op, 16);
  const auto rep = measure_para_linf_l2(*op, spec, 10, 12);
  EXPECT_NEAR(rep.constant_ratio, 1.0, 2e-2);
  EXPECT_TRUE(std::isfinite(rep.sup_ratio));
  // g in ker L
  const CVector one = CVector::Ones(48);
  Rng rng(12);
  const CVector f = random_uniform_real(48, rng);
  EXPECT_LE(para_bilinear(*op, spec, CMatrix(f), CMatrix(one)).norm(), 1e-10);
}

TEST(Paraproduct, L2MeasurementDegenerateAndFinite) {
  auto op = periodic_line(32);
  const auto spec = pair_spec(*op);
  const auto flat = measure_para_l2(*op, spec, CVector::Constant(32, 2.0), 5, 13);
  EXPECT_TRUE(flat.degenerate);
  EXPECT_LE(flat.sup_ratio, 1e-9);
  Rng rng(13);
  const CVector b = random_uniform_real(32, rng);
  const auto rep = measure_para_l2(*op, spec, b, 10, 13, 0, true);
  EXPECT_FALSE(rep.degenerate);
  EXPECT_TRUE(rep.hypothesis_ok);
  EXPECT_GT(rep.sup_ratio, 0.0);
  EXPECT_TRUE(std::isfinite(rep.sup_ratio));
  EXPECT_EQ(rep.ratios.size(), rep.kinds.size());
  EXPECT_LT(rep.refinement_delta, 0.1);
  EXPECT_LE(rep.sup_ratio_linf, rep.sup_ratio * rep.bmo / rep.linf * (1 + 1e-12));
}

TEST(Paraproduct, LpHpMeasurement) {
  auto op = periodic_line(32);
  const auto spec = pair_spec(*op);
  Rng rng(14);
  const CVector b = random_uniform_real(32, rng);
  const auto p4 = measure_para_lp_hp(*op, spec, b, 4.0, 5, 14);
  EXPECT_GT(p4.sup_ratio, 0.0);
  EXPECT_TRUE(std::isfinite(p4.sup_ratio));
  const auto pinf = measure_para_lp_hp(*op, spec, b, std::numeric_limits<double>::infinity(), 3, 14);
  EXPECT_GT(pinf.sup_ratio, 0.0);
  EXPECT_TRUE(std::isfinite(pinf.sup_ratio));
  EXPECT_THROW(measure_para_lp_hp(*op, spec, b, 2.0, 1, 14), InvalidArgument);
}

TEST(Paraproduct, MoleculeBound) {
  auto op = periodic_line(64);
  const auto spec = pair_spec(*op);
  std::vector<Molecule> ms;
  for (double r : {2.0 / 64, 4.0 / 64, 8.0 / 64}) ms.push_back(molecule_make(*op, {10, r}, 1, 1.0));
  const auto one = measure_para_hp_l1(*op, spec, CVector::Ones(64), ms);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    // Pi(1, m) reproduces m
    EXPECT_NEAR(one.ratios[i], op->space().norm(ms[i].m, 1.0), 2e-2 * op->space().norm(ms[i].m, 1.0));
  }
  const auto zero = measure_para_hp_l1(*op, spec, CVector::Zero(64), ms);
  EXPECT_EQ(zero.sup_ratio, 0.0);
  EXPECT_THROW(measure_para_hp_l1(*op, spec, CVector::Ones(64), {}), InvalidArgument);
}

TEST(Paraproduct, AverageHeatConstant) {
  auto op = complex_line(48, 15);
  Rng rng(15);
  CMatrix P(48, 5);
  for (int c = 0; c < 5; ++c) P.col(c) = random_uniform_real(48, rng);
  const double c = average_heat_constant(*op, default_tgrid(*op, 4), P);
  EXPECT_GT(c, 0.0);
  EXPECT_LT(c, 10.0);
}

TEST(Paraproduct, TruncationTailsDecrease) {
  auto op = periodic_line(48);
  const auto spec = pair_spec(*op, 8);
  Rng rng(16);
  const CVector b = random_uniform_real(48, rng);
  const CVector f = random_gaussian(48, rng);
  ParaproductSpec narrow = spec;
  narrow.grid = TGrid(spec.grid.delta() * 8, spec.grid.R() / 8, 8);
  const auto tails = para_truncation_tails(*op, narrow, b, CMatrix(f), {2.0, 4.0, 8.0, 16.0});
  ASSERT_EQ(tails.size(), 4u);
  for (std::size_t i = 0; i + 1 < tails.size(); ++i) EXPECT_GT(tails[i], tails[i + 1]);
}

TEST(Paraproduct, Leibniz) {
  auto op = complex_line(48, 17);
  const auto psi = PsiFunction::exp_monomial(2);
  const auto spec = make_paraproduct_spec(*op, psi, normalize_pair(psi, psi), default_tgrid(*op, 8, 1e-4, 40.0));
  Rng rng(17);
  for (double s : {0.5, 1.0, 1.5}) {
    const auto rep = leibniz_check(*op, spec, s, random_uniform_real(48, rng), random_gaussian(48, rng));
    EXPECT_LE(rep.residual, 1e-6) << s;
    EXPECT_TRUE(std::isfinite(rep.norm_ratio));
  }
  EXPECT_EQ(leibniz_check(*op, spec, 0.0, random_uniform_real(48, rng), random_gaussian(48, rng)).residual, 0.0);
  const auto low = PsiFunction::exp_monomial(0.5);
  const auto bad = make_paraproduct_spec(*op, low, normalize_pair(low, low), spec.grid);
  EXPECT_THROW(leibniz_check(*op, bad, 1.5, CVector::Ones(48), CVector::Ones(48)), HypothesisViolated);
}

TEST(Paraproduct, OffdiagMultipliers) {
  auto op = periodic_line(16);
  Rng rng(18);
  CMatrix v(16, 1);
  v.col(0) = random_gaussian(16, rng);
  const TGrid g(0.05, 0.4, 2);
  for (auto kind : {OffdiagMultiplier::Kind::one_minus_heat, OffdiagMultiplier::Kind::heat_monomial}) {
    const OffdiagMultiplier phi{kind, 2};
    const auto out = phi.sweep(*op, g, v, {}, {});
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double s = g[k] * g[k];
      const CMatrix expect = op->oracle().apply([&](Complex z) {
        const Complex base = kind == OffdiagMultiplier::Kind::one_minus_heat ? 1.0 - std::exp(-s * z) : s * z * std::exp(-s * z);
        return base * base;
      }, v);
      EXPECT_LE((out[k] - expect).norm(), 1e-9 * v.norm());
    }
  }
}

TEST(Paraproduct, OffdiagDecay) {
  auto op = periodic_line(128);
  const auto spec = pair_spec(*op, 8);
  Rng rng(19);
  const CVector f = random_uniform_real(128, rng);
  std::vector<std::size_t> E, F;
  for (std::size_t i = 0; i < 4; ++i) E.push_back(i);
  for (std::size_t i = 68; i < 72; ++i) F.push_back(i);
  const TGrid fit(1.0 / 128, 0.5, 4);
  for (auto kind : {OffdiagMultiplier::Kind::one_minus_heat, OffdiagMultiplier::Kind::heat_monomial}) {
    const auto rep = para_offdiag(*op, spec, f, E, F, {kind, 2}, fit);
    ASSERT_TRUE(rep.fit.fitted);
    EXPECT_GE(rep.fit.gamma, rep.admissible - 0.5);
  }
}

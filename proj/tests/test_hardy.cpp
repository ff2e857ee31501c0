#include "paralab/hardy.hpp"

#include <gtest/gtest.h>

using namespace paralab;

namespace {

OperatorPtr periodic_line(int n, Complex a = 1.0) {
  return build_divergence_form(build_grid_space({n}, 1.0 / n, Topology::periodic), a, Boundary::periodic);
}

OperatorPtr random_line(int n, std::uint64_t seed) {
  auto sp = build_grid_space({n}, 1.0 / n, Topology::periodic);
  return build_divergence_form(sp, CoefficientField::random(grid_edges(*sp, Boundary::periodic).size(), 0.3, 0.5, seed),
                               Boundary::periodic);
}

CVector bounded_random(int n, Rng& rng) {
  return random_uniform_real(n, rng, -1.0, 1.0);
}

}  // namespace

TEST(Hardy, KernelHasZeroNorm) {
  auto op = periodic_line(32);
  const TGrid g(1.0 / 64, 2.0, 4);
  const auto rep = hardy_norm(*op, CVector::Ones(32), 1.0, PsiFunction::exp_monomial(1), g);
  EXPECT_LE(rep.value, 1e-10);
}

TEST(Hardy, TwoNormIsQuadraticNorm) {
  // with s = t^2: sum_k ||psi(t_k^2 L) f||^2 dlog t = (1/2) sum_k ||psi(s_k L) f||^2 dlog s
  auto op = periodic_line(64);
  const TGrid g(1e-3, 30.0, 8);
  const TGrid gs(g.delta() * g.delta(), g.R() * g.R(), 4);
  Rng rng(2);
  const auto psi = PsiFunction::exp_monomial(1);
  for (int trial = 0; trial < 5; ++trial) {
    const CVector f = random_gaussian(64, rng);
    const double h = hardy_norm(*op, f, 2.0, psi, g).value;
    const double q = quadratic_norm(*op, psi, CMatrix(f), gs)[0];
    EXPECT_NEAR(h * h, 0.5 * q * q, 1e-10 * q * q);
  }
}

TEST(Hardy, DecayHypothesis) {
  auto op = periodic_line(32);
  const TGrid g(1.0 / 32, 1.0, 2);
  const CVector f = CVector::Ones(32);
  EXPECT_THROW(hardy_norm(*op, f, 1.0, PsiFunction::rational(1.0, 0.1), g), HypothesisViolated);
  EXPECT_THROW(hardy_norm(*op, f, 3.0, PsiFunction::rational(0.1, 1.0), g), HypothesisViolated);
  EXPECT_NO_THROW(hardy_norm(*op, f, 3.0, PsiFunction::rational(1.0, 0.1), g));
  EXPECT_THROW(hardy_norm(*op, f, 0.5, PsiFunction::exp_monomial(1), g), InvalidArgument);
}

TEST(Hardy, RefinementDeltaIsSmallOnFineGrids) {
  auto op = periodic_line(64);
  Rng rng(3);
  const CVector f = random_gaussian(64, rng);
  const auto rep = hardy_norm(*op, f, 1.0, PsiFunction::exp_monomial(1), TGrid(1.0 / 64, 4.0, 16));
  EXPECT_LT(rep.refinement_delta, 0.05);
  EXPECT_TRUE(std::isnan(hardy_norm(*op, f, 1.0, PsiFunction::exp_monomial(1), TGrid(1.0 / 64, 4.0, 3)).refinement_delta));
}

TEST(Bmo, ConstantsAreInvisible) {
  auto op = random_line(48, 4);
  const int M = default_bmo_order(*op);
  EXPECT_LE(bmo_norm(*op, CVector::Constant(48, Complex(2.0, 1.0)), M), 1e-9);
  Rng rng(5);
  const CVector f = bounded_random(48, rng);
  EXPECT_NEAR(bmo_norm(*op, f, M), bmo_norm(*op, CVector(f.array() + Complex(3.0, -1.0)), M), 1e-9);
}

TEST(Bmo, EigenvectorClosedForm) {
  auto op = periodic_line(40);
  const auto& orc = op->oracle();
  const auto& sp = op->space();
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < orc.eigenvalues.size(); ++i) {
    if (std::abs(orc.eigenvalues[i]) > 1.0) {
      idx = i;
      break;
    }
  }
  const double lambda = orc.eigenvalues[idx].real();
  const CVector v = orc.vectors.col(idx);
  for (int M : {1, 2}) {
    double expect = 0.0;
    for (double r : lattice_radii(sp)) {
      const double factor = std::pow(1.0 - std::exp(-r * r * lambda), M);
      for (std::size_t c = 0; c < sp.size(); ++c) {
        double mass = 0.0, vol = 0.0;
        for (std::size_t y = 0; y < sp.size(); ++y) {
          if (sp.distance(c, y) < r) {
            mass += sp.weight(y) * std::norm(v[static_cast<Eigen::Index>(y)]);
            vol += sp.weight(y);
          }
        }
        expect = std::max(expect, factor * std::sqrt(mass / vol));
      }
    }
    EXPECT_NEAR(bmo_norm(*op, v, M), expect, 1e-9 * expect);
  }
}

TEST(Bmo, BoundedByLinfty) {
  // the heat semigroup of a real uniform conductivity is an L^inf contraction
  auto op = periodic_line(64);
  Rng rng(6);
  for (int M : {1, 2}) {
    for (int trial = 0; trial < 10; ++trial) {
      const CVector f = bounded_random(64, rng);
      EXPECT_LE(bmo_norm(*op, f, M), std::pow(2.0, M) * f.cwiseAbs().maxCoeff() + 1e-12);
    }
  }
  const auto rep = bmo_report(*op, bounded_random(64, rng), 1);
  EXPECT_TRUE(rep.order_ok);
  EXPECT_GT(rep.argmax.radius, 0.0);
}

TEST(Molecule, MakeAndCheck) {
  auto op = random_line(64, 8);
  const auto& sp = op->space();
  const Ball ball{20, 4.0 / 64};
  const auto mol = molecule_make(*op, ball, 1, 1.0);
  EXPECT_TRUE(mol.valid);
  EXPECT_NEAR(mol.max_ratio, 1.0, 1e-12);
  EXPECT_LE(mol.witness_residual, 1e-12);
  // k = 0, j = 0 directly
  const double r2 = ball.radius * ball.radius;
  EXPECT_LE(sp.norm_on(mol.b, ball_points(sp, ball)), r2 / std::sqrt(ball_volume(sp, ball)) * (1 + 1e-12));
  // doubling eps multiplies the j-th column by 2^{j eps}
  const auto twice = molecule_check(*op, mol.m, mol.b, ball, 1, 2.0);
  for (Eigen::Index j = 0; j < twice.ratios.cols(); ++j) {
    for (Eigen::Index k = 0; k < twice.ratios.rows(); ++k) {
      EXPECT_NEAR(twice.ratios(k, j), mol.ratios(k, j) * std::exp2(double(j)), 1e-12 * (1 + twice.ratios(k, j)));
    }
  }
  EXPECT_EQ(twice.valid, twice.max_ratio <= 1.0 + 1e-6);
  const auto doubled = molecule_check(*op, 2.0 * mol.m, 2.0 * mol.b, ball, 1, 1.0);
  EXPECT_FALSE(doubled.valid);
  EXPECT_NEAR(doubled.max_ratio, 2.0, 1e-12);
  EXPECT_THROW(molecule_check(*op, 2.0 * mol.m, mol.b, ball, 1, 1.0), InvalidArgument);
}

TEST(Molecule, DisjointBallsAreNearlyOrthogonal) {
  auto op = periodic_line(128);
  const auto& sp = op->space();
  const auto a = molecule_make(*op, {10, 3.0 / 128}, 2, 1.0);
  const auto b = molecule_make(*op, {74, 3.0 / 128}, 2, 1.0);
  const double c = std::abs(sp.inner(a.m, b.m)) / (sp.norm(a.m) * sp.norm(b.m));
  EXPECT_LE(c, 0.1);
}

TEST(Carleson, ConstantIsVacuous) {
  auto op = random_line(32, 3);
  const auto rep = carleson_characterization(*op, PsiFunction::exp_monomial(1), CVector::Constant(32, 1.5),
                                             TGrid(1.0 / 32, 1.0, 4), 1);
  EXPECT_TRUE(rep.vacuous);
  EXPECT_FALSE(rep.inconsistent);
}

TEST(Carleson, RatioTwoSided) {
  auto op = periodic_line(64);
  const TGrid g(1.0 / 64, 1.0, 4);
  Rng rng(7);
  double lo = INFINITY, hi = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto rep = carleson_characterization(*op, PsiFunction::exp_monomial(1), bounded_random(64, rng), g, 1);
    ASSERT_FALSE(rep.vacuous);
    lo = std::min(lo, rep.ratio);
    hi = std::max(hi, rep.ratio);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi / lo, 50.0);
  EXPECT_THROW(carleson_characterization(*op, PsiFunction::rational(0.2, 2.0), CVector::Ones(64), g, 1),
               HypothesisViolated);
}

TEST(Pairing, ReproducesInnerProduct) {
  auto op = periodic_line(64);
  const auto psi = PsiFunction::exp_monomial(1);
  const auto pt = normalize_pair(psi, PsiFunction::exp_monomial(2));
  const TGrid g = default_tgrid(*op, 8, 1e-6, 1e6);
  Rng rng(9);
  const CVector f = op->project_range(CMatrix(random_gaussian(64, rng))).col(0);
  const CVector h = op->project_range(CMatrix(random_gaussian(64, rng))).col(0);
  const auto rep = reproducing_pairing_check(*op, psi, pt, f, h, g);
  EXPECT_LE(rep.residual, 1e-3 * std::abs(rep.pairing));
  const auto narrow = reproducing_pairing_check(*op, psi, pt, f, h, default_tgrid(*op, 8, 1e-2, 1e2));
  EXPECT_LT(rep.residual, narrow.residual);
  const auto constant = reproducing_pairing_check(*op, psi, pt, CVector::Ones(64), h, g);
  EXPECT_LE(std::abs(constant.pairing), 1e-12);
  EXPECT_LE(std::abs(constant.integral), 1e-10);
  EXPECT_THROW(reproducing_pairing_check(*op, psi, psi, f, h, g), InvalidArgument);
}

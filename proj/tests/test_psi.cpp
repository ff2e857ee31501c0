#include "paralab/psi.hpp"

#include <gtest/gtest.h>

using namespace paralab;

TEST(Psi, FamilyValues) {
  EXPECT_NEAR(std::abs(PsiFunction::exp_monomial(1)(1.0) - std::exp(-1.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(PsiFunction::rational(1, 1)(1.0) - 0.5 * 0.5), 0.0, 1e-15);
  // z^a/(1+z)^{a+b} at z=1 is 2^{-(a+b)}; with a=b=1 that is 1/4
  EXPECT_NEAR(PsiFunction::rational(1, 1)(1.0).real(), 0.25, 1e-15);
  EXPECT_EQ(PsiFunction::exp_monomial(2)(0.0), Complex(0.0));
}

TEST(Psi, Metadata) {
  const auto e = PsiFunction::exp_monomial(1.5);
  EXPECT_EQ(e.alpha(), 1.5);
  EXPECT_EQ(e.beta(), kInfiniteDecay);
  EXPECT_DOUBLE_EQ(e.sigma(), kPi / 2);
  const auto r = PsiFunction::rational(2, 3);
  EXPECT_EQ(r.alpha(), 2.0);
  EXPECT_EQ(r.beta(), 3.0);
  EXPECT_DOUBLE_EQ(r.sigma(), kPi);
  EXPECT_THROW(PsiFunction::exp_monomial(0), InvalidArgument);
  EXPECT_THROW(PsiFunction::rational(1, -1), InvalidArgument);
}

TEST(Psi, ClosureUpdatesOrders) {
  const auto r = PsiFunction::rational(2, 3);
  const auto zr = r.times_power(0.5);
  EXPECT_DOUBLE_EQ(zr.alpha(), 2.5);
  EXPECT_DOUBLE_EQ(zr.beta(), 2.5);
  const auto prod = r.times(PsiFunction::rational(1, 1));
  EXPECT_DOUBLE_EQ(prod.alpha(), 3.0);
  EXPECT_DOUBLE_EQ(prod.beta(), 4.0);
  const auto sat = PsiFunction::exp_monomial(1).times(r);
  EXPECT_EQ(sat.beta(), kInfiniteDecay);
  EXPECT_DOUBLE_EQ(r.scaled(3.0).alpha(), 2.0);
  const Complex z(0.7, 0.4);
  EXPECT_LT(std::abs(prod(z) - r(z) * PsiFunction::rational(1, 1)(z)), 1e-15);
  EXPECT_LT(std::abs(zr(z) - std::pow(z, 0.5) * r(z)), 1e-15);
}

TEST(Psi, FittedOrders) {
  EXPECT_NEAR(fitted_order_at_zero(PsiFunction::exp_monomial(2)), 2.0, 0.02);
  EXPECT_NEAR(fitted_order_at_zero(PsiFunction::rational(1.5, 2)), 1.5, 0.015);
  EXPECT_NEAR(fitted_order_at_infinity(PsiFunction::rational(1.5, 2)), 2.0, 0.02);
}

TEST(Psi, DecayConstantFinite) {
  for (const auto& p : {PsiFunction::exp_monomial(1), PsiFunction::rational(2, 2), PsiFunction::rational(0.5, 1)}) {
    const double c = decay_constant(p);
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_GT(c, 0.0);
  }
  // |z^a/(1+z)^{a+b}| <= |z|^a / (1 + |z|^{a+b}) * 2^{a+b} on the positive axis
  EXPECT_LE(decay_constant(PsiFunction::rational(1, 1)), 4.0 * 1.5);
}

TEST(Psi, NormalizePairClosedForms) {
  // int_0^inf t^a e^{-2t} dt/t = Gamma(a) / 2^a
  const auto e1 = PsiFunction::exp_monomial(1), e2 = PsiFunction::exp_monomial(2);
  EXPECT_NEAR(normalize_pair(e1, e1).scale().real(), 4.0, 1e-10);
  // int t^2 e^{-t} t e^{-t} dt/t = Gamma(3)/2^3 = 1/4
  EXPECT_NEAR(normalize_pair(e2, e1).scale().real(), 4.0, 1e-10);
  EXPECT_NEAR(normalize_pair(e2, e2).scale().real(), 16.0 / 6.0, 1e-9);
  const auto n = normalize_pair(e1, e1);
  EXPECT_NEAR(normalize_pair(e1, n).scale().real(), 4.0, 1e-10);
  EXPECT_NEAR(std::abs(pairing_integral(e1, n) - 1.0), 0.0, 1e-10);
  // rational(1,1)^2: int t / (1+t)^4 dt = B(2,2) = 1/6
  const auto r = PsiFunction::rational(1, 1);
  EXPECT_NEAR(normalize_pair(r, r).scale().real(), 6.0, 1e-9);
}

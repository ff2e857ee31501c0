#pragma once
// Holomorphic symbols of product form c z^a e^{-kappa z} (1+z)^{-p} with their
// decay orders at 0 and at infinity.

#include "paralab/core.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace paralab {

/// Order recorded at infinity for exponentially decaying symbols.
inline constexpr double kInfiniteDecay = 32.0;

class PsiFunction {
 public:
  PsiFunction() = default;
  PsiFunction(Complex scale, double power, double kappa, double pole, std::string family)
      : c_(scale), a_(power), kappa_(kappa), p_(pole), family_(std::move(family)) {}

  /// z^a e^{-z}.
  static PsiFunction exp_monomial(double a) {
    if (!(a > 0.0)) throw InvalidArgument("exp_monomial: a must be > 0");
    return {1.0, a, 1.0, 0.0, "exp_monomial"};
  }

  /// z^a / (1+z)^{a+b}.
  static PsiFunction rational(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("rational: a and b must be > 0");
    return {1.0, a, 0.0, a + b, "rational"};
  }

  Complex operator()(Complex z) const {
    if (z == Complex(0.0)) return a_ > 0 ? Complex(0.0) : (a_ == 0 ? c_ : Complex(NAN, NAN));
    Complex e = a_ * std::log(z) - kappa_ * z;
    if (p_ != 0.0) e -= p_ * std::log(1.0 + z);
    if (e.real() < -745.0) return 0.0;
    return c_ * std::exp(e);
  }

  double alpha() const { return a_; }
  double beta() const {
    if (kappa_ > 0.0) return kInfiniteDecay;
    return std::min(p_ - a_, kInfiniteDecay);
  }
  bool exponential_decay() const { return kappa_ > 0.0; }
  /// Half-angle of the sector on which the symbol is bounded.
  double sigma() const { return kappa_ > 0.0 ? kPi / 2 : kPi; }

  Complex scale() const { return c_; }
  double power() const { return a_; }
  double kappa() const { return kappa_; }
  double pole() const { return p_; }
  const std::string& family() const { return family_; }

  PsiFunction scaled(Complex s) const { return {c_ * s, a_, kappa_, p_, family_}; }
  PsiFunction times(const PsiFunction& o) const {
    return {c_ * o.c_, a_ + o.a_, kappa_ + o.kappa_, p_ + o.p_, "product"};
  }
  /// z^s psi(z); the order at 0 moves by s and the order at infinity by -s.
  PsiFunction times_power(double s) const { return {c_, a_ + s, kappa_, p_, family_}; }
  /// psi(z^*)^* , the symbol of psi(L)^* = conj(psi)(L^*).
  PsiFunction conjugate() const { return {std::conj(c_), a_, kappa_, p_, family_}; }

  std::string label() const {
    std::ostringstream os;
    os << family_ << "(c=" << c_.real();
    if (c_.imag() != 0.0) os << (c_.imag() > 0 ? "+" : "") << c_.imag() << "i";
    os << ",a=" << a_ << ",kappa=" << kappa_ << ",p=" << p_ << ")";
    return os.str();
  }

  bool operator==(const PsiFunction&) const = default;

 private:
  Complex c_ = 1.0;
  double a_ = 1.0;
  double kappa_ = 1.0;
  double p_ = 0.0;
  std::string family_ = "exp_monomial";
};

/// Local log-log slope of |psi| on the positive axis near 0.
inline double fitted_order_at_zero(const PsiFunction& psi, double r = 1e-6) {
  const double a = std::abs(psi(r)), b = std::abs(psi(10.0 * r));
  return std::log10(b / a);
}

/// Local log-log slope of 1/|psi| on the positive axis near infinity.
inline double fitted_order_at_infinity(const PsiFunction& psi, double r = 1e6) {
  const double a = std::abs(psi(r)), b = std::abs(psi(10.0 * r));
  if (a == 0.0 || b == 0.0) return kInfiniteDecay;
  return std::min(std::log10(a / b), kInfiniteDecay);
}

/// Smallest C with |psi(zeta)| <= C |zeta|^alpha (1 + |zeta|^{alpha+beta})^{-1}
/// over rays arg zeta in {0, +-sigma/2}, |zeta| in [1e-6, 1e6].
inline double decay_constant(const PsiFunction& psi, int samples_per_ray = 241) {
  double c = 0.0;
  const double al = psi.alpha(), be = psi.beta();
  for (double ang : {0.0, psi.sigma() / 2, -psi.sigma() / 2}) {
    for (int s = 0; s < samples_per_ray; ++s) {
      const double lr = std::log(1e-6) + (std::log(1e12) * s) / (samples_per_ray - 1);
      const double r = std::exp(lr);
      const Complex v = psi(std::polar(r, ang));
      if (v == Complex(0.0)) continue;
      // log of the bound, with log(1 + r^{a+b}) evaluated stably.
      const double x = (al + be) * lr;
      const double log_den = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      c = std::max(c, std::exp(std::log(std::abs(v)) - al * lr + log_den));
    }
  }
  return c;
}

/// int_0^inf psi(t) phi(t) dt / t.
inline Complex pairing_integral(const PsiFunction& psi, const PsiFunction& phi) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto part = [&](bool imag) {
    auto f = [&](double t) {
      const Complex v = psi(t) * phi(t) / t;
      return imag ? v.imag() : v.real();
    };
    return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
  };
  return {part(false), part(true)};
}

/// Rescales psi_tilde so that int_0^inf psi psi_tilde dt/t = 1.
inline PsiFunction normalize_pair(const PsiFunction& psi, const PsiFunction& psi_tilde) {
  const Complex I = pairing_integral(psi, psi_tilde);
  if (!(std::abs(I) > 1e-300)) throw InvalidArgument("normalize_pair: vanishing pairing integral");
  PsiFunction out = psi_tilde.scaled(1.0 / I);
  const Complex check = pairing_integral(psi, out);
  if (std::abs(check - 1.0) > 1e-10) {
    throw NumericalFailure("normalize_pair: normalization deviates by " +
                           std::to_string(std::abs(check - 1.0)));
  }
  return out;
}

}  // namespace paralab

#pragma once
// Geometric grids t_k = delta 2^{k/q} on [delta, R], with dt/t discretized as
// the uniform log-step ln 2 / q.

#include "paralab/operator.hpp"

#include <cmath>

namespace paralab {

class TGrid {
 public:
  TGrid() = default;
  TGrid(double delta, double R, int q) : delta_(delta), R_(R), q_(q) {
    if (!(delta > 0.0)) throw InvalidArgument("TGrid: delta must be > 0");
    if (!(R > delta)) throw InvalidArgument("TGrid: R must exceed delta");
    if (q < 1) throw InvalidArgument("TGrid: q must be >= 1");
    const auto count = static_cast<std::size_t>(std::floor(q * std::log2(R / delta) + 1e-9)) + 1;
    nodes_.resize(count);
    for (std::size_t k = 0; k < count; ++k) nodes_[k] = delta * std::exp2(double(k) / q);
  }

  double delta() const { return delta_; }
  double R() const { return R_; }
  int q() const { return q_; }
  std::size_t size() const { return nodes_.size(); }
  double operator[](std::size_t k) const { return nodes_[k]; }
  const std::vector<double>& nodes() const { return nodes_; }
  double dlog() const { return std::log(2.0) / q_; }

  /// delta / factor, R * factor.
  TGrid widened(double factor) const { return {delta_ / factor, R_ * factor, q_}; }
  TGrid with_q(int q) const { return {delta_, R_, q}; }

  bool operator==(const TGrid& o) const {
    return delta_ == o.delta_ && R_ == o.R_ && q_ == o.q_;
  }

 private:
  double delta_ = 1.0;
  double R_ = 2.0;
  int q_ = 1;
  std::vector<double> nodes_{1.0};
};

/// Grid with t^{2m} lambda covering [lo, hi] for every nonzero eigenvalue
/// modulus lambda of the operator.
inline TGrid default_tgrid(const SectorialOperator& op, int q = 16, double lo = 1e-3,
                           double hi = 1e3) {
  const auto [lmin, lmax] = op.spectral_range();
  const double e = 1.0 / op.order_2m();
  return {std::pow(lo / lmax, e), std::pow(hi / lmin, e), q};
}

}  // namespace paralab

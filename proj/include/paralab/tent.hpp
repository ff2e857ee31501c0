#pragma once
// Tent-space functionals of fields F(y, t) on X x (0, inf), sampled at the
// nodes of a geometric t-grid with dt/t -> ln 2 / q.
//
// Cones are open, Gamma(x) = {(y, t): d(y, x) < t}. Tents are
// T(B) = {(y, t): dist(y, B^c) >= t}; since the metric is the grid-graph
// distance, dist(y, B^c) is found by a breadth-first search inside B.

#include "paralab/calculus.hpp"

#include <queue>

namespace paralab {

using RMatrix = Eigen::MatrixXd;

/// Values F(y, t_k) as an N x K matrix, column k at t_k.
struct FieldFunction {
  CMatrix values;
  TGrid grid;

  FieldFunction() = default;
  FieldFunction(CMatrix v, TGrid g) : values(std::move(v)), grid(std::move(g)) {
    if (values.cols() != static_cast<Eigen::Index>(grid.size())) {
      throw InvalidArgument("FieldFunction: column count " + std::to_string(values.cols()) +
                            " does not match the t-grid size " + std::to_string(grid.size()));
    }
    if (!values.allFinite()) throw InvalidArgument("FieldFunction: non-finite values");
  }

  static FieldFunction zeros(std::size_t n, const TGrid& g) {
    return {CMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g.size())), g};
  }

  std::size_t points() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t nodes() const { return grid.size(); }
  RMatrix abs2() const { return values.cwiseAbs2(); }
  RMatrix abs() const { return values.cwiseAbs(); }

  FieldFunction operator*(const FieldFunction& o) const {
    if (!(grid == o.grid) || values.rows() != o.values.rows()) {
      throw InvalidArgument("FieldFunction: product of fields on different grids");
    }
    return {values.cwiseProduct(o.values), grid};
  }
  FieldFunction scaled(Complex c) const { return {c * values, grid}; }
};

namespace detail {

inline void check_field(const MetricMeasureSpace& space, Eigen::Index rows) {
  if (rows != static_cast<Eigen::Index>(space.size())) {
    throw InvalidArgument("tent: field has " + std::to_string(rows) + " points, space has " +
                          std::to_string(space.size()));
  }
}

/// sum over B(x, shells) of mu_y w_y, for every x.
inline RVector ball_mass(const MetricMeasureSpace& space, int shells, const RVector& w) {
  const auto n = static_cast<Eigen::Index>(space.size());
  if (shells > space.max_lattice_distance()) {
    return RVector::Constant(n, space.weights().dot(w));
  }
  RVector out(n);
  parallel_for(space.size(), [&](std::size_t x) {
    double s = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) s += space.weight(y) * w[y];
    out[static_cast<Eigen::Index>(x)] = s;
  });
  return out;
}

inline RVector ball_max(const MetricMeasureSpace& space, int shells, const RVector& w) {
  const auto n = static_cast<Eigen::Index>(space.size());
  if (shells > space.max_lattice_distance()) return RVector::Constant(n, w.maxCoeff());
  RVector out(n);
  parallel_for(space.size(), [&](std::size_t x) {
    double m = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) m = std::max(m, w[y]);
    out[static_cast<Eigen::Index>(x)] = m;
  });
  return out;
}

/// out(x) = max over centers c of table(c, d(c, x)), where table(c, s) is
/// already a suffix max over balls B(c, s') with s' > s.
inline RVector max_over_containing_balls(const MetricMeasureSpace& space, const RMatrix& suffix) {
  RVector out(static_cast<Eigen::Index>(space.size()));
  parallel_for(space.size(), [&](std::size_t x) {
    double m = 0.0;
    for (std::size_t c = 0; c < space.size(); ++c) {
      const int d = space.lattice_distance(c, x);
      if (d < suffix.cols()) m = std::max(m, suffix(static_cast<Eigen::Index>(c), d));
    }
    out[static_cast<Eigen::Index>(x)] = m;
  });
  return out;
}

}  // namespace detail

/// Conical square function: AF(x)^2 = sum_k dlog sum_{d(y,x)<t_k} |F(y,t_k)|^2 mu_y / V(x,t_k).
inline RVector conical_square(const MetricMeasureSpace& space, const FieldFunction& F) {
  detail::check_field(space, F.values.rows());
  const RMatrix a2 = F.abs2();
  const RVector ones = RVector::Ones(static_cast<Eigen::Index>(space.size()));
  RVector acc = RVector::Zero(static_cast<Eigen::Index>(space.size()));
  for (std::size_t k = 0; k < F.nodes(); ++k) {
    const int shells = space.shells_below(F.grid[k]);
    acc += F.grid.dlog() * detail::ball_mass(space, shells, a2.col(static_cast<Eigen::Index>(k)))
                               .cwiseQuotient(detail::ball_mass(space, shells, ones));
  }
  return acc.cwiseSqrt();
}

/// Lattice depths dist(y, B^c) / h for the members of the ball of `shells`
/// lattice shells around `center`, in shell_prefix order. Empty when B^c is.
inline std::vector<int> tent_depths(const MetricMeasureSpace& space, std::size_t center, int shells) {
  const auto members = space.shell_prefix(center, shells);
  if (members.size() == space.size()) return {};
  thread_local std::vector<int> slot;
  if (slot.size() != space.size()) slot.assign(space.size(), -1);
  for (std::size_t i = 0; i < members.size(); ++i) slot[members[i]] = static_cast<int>(i);
  std::vector<int> depth(members.size(), 0);
  std::queue<std::size_t> frontier;
  for (std::size_t i = 0; i < members.size(); ++i) {
    bool edge = false;
    space.visit_neighbors(members[i], [&](std::size_t z) { edge = edge || slot[z] < 0; });
    if (edge) {
      depth[i] = 1;
      frontier.push(i);
    }
  }
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    space.visit_neighbors(members[i], [&](std::size_t z) {
      const int j = slot[z];
      if (j >= 0 && depth[static_cast<std::size_t>(j)] == 0) {
        depth[static_cast<std::size_t>(j)] = depth[i] + 1;
        frontier.push(static_cast<std::size_t>(j));
      }
    });
  }
  for (std::uint32_t y : members) slot[y] = -1;
  return depth;
}

/// The balls entering Carleson suprema: every center with radii from the
/// t-grid and the diameter. Periodic spaces keep radii below diam/2; bounded
/// spaces keep balls whose complement is nonempty.
struct TentBalls {
  std::vector<int> shells;  // distinct shell counts, increasing
};

inline TentBalls tent_balls(const MetricMeasureSpace& space, const TGrid& grid) {
  std::vector<double> radii(grid.nodes());
  radii.push_back(space.diameter());
  std::vector<int> s;
  for (double r : radii) {
    if (space.topology() == Topology::periodic && !(r < 0.5 * space.diameter())) continue;
    const int k = space.shells_below(r);
    if (k >= 1) s.push_back(k);
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return {s};
}

/// Per-ball tent averages (1/V(B)) sum_{(y,t_k) in T(B)} w(y,k) mu_y dlog for
/// a nonnegative density w; rows are centers, columns follow balls.shells.
/// Excluded balls hold -1.
inline RMatrix tent_ball_averages(const MetricMeasureSpace& space, const RMatrix& w, const TGrid& grid,
                                  const TentBalls& balls) {
  detail::check_field(space, w.rows());
  const auto K = static_cast<Eigen::Index>(grid.size());
  // cum(y, j) = sum_{k < j} w(y, k)
  RMatrix cum = RMatrix::Zero(w.rows(), K + 1);
  for (Eigen::Index k = 0; k < K; ++k) cum.col(k + 1) = cum.col(k) + w.col(k);
  // nodes with t_k <= depth h; the slack absorbs rounding in the grid nodes
  const int maxd = space.max_lattice_distance() + 1;
  std::vector<Eigen::Index> below(static_cast<std::size_t>(maxd) + 1, 0);
  for (int d = 0; d <= maxd; ++d) {
    const double depth = d * space.spacing() * (1.0 + 1e-12);
    below[static_cast<std::size_t>(d)] =
        std::upper_bound(grid.nodes().begin(), grid.nodes().end(), depth) - grid.nodes().begin();
  }
  const auto S = static_cast<Eigen::Index>(balls.shells.size());
  RMatrix out = RMatrix::Constant(w.rows(), S, -1.0);
  parallel_for(space.size(), [&](std::size_t c) {
    const int ecc = space.eccentricity(c);
    for (Eigen::Index b = 0; b < S; ++b) {
      const int s = balls.shells[static_cast<std::size_t>(b)];
      if (s > ecc) continue;  // B = X
      const auto members = space.shell_prefix(c, s);
      const auto depth = tent_depths(space, c, s);
      double mass = 0.0, vol = 0.0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const std::uint32_t y = members[i];
        vol += space.weight(y);
        mass += space.weight(y) * cum(y, below[static_cast<std::size_t>(depth[i])]);
      }
      out(static_cast<Eigen::Index>(c), b) = grid.dlog() * mass / vol;
    }
  });
  return out;
}

/// Carleson norm sup_B nu(T(B)) / V(B) of d nu = density mu dt/t.
inline double carleson_norm(const MetricMeasureSpace& space, const RMatrix& density, const TGrid& grid) {
  if ((density.array() < 0.0).any()) throw InvalidArgument("carleson_norm: density must be nonnegative");
  const RMatrix v = tent_ball_averages(space, density, grid, tent_balls(space, grid));
  return v.size() ? std::max(0.0, v.maxCoeff()) : 0.0;
}

/// Carleson function: CF(x) = sup_{B containing x} ((1/V(B)) sum_{T(B)} |F|^2 mu dlog)^{1/2}.
inline RVector carleson_functional(const MetricMeasureSpace& space, const FieldFunction& F) {
  detail::check_field(space, F.values.rows());
  const TentBalls balls = tent_balls(space, F.grid);
  const RMatrix v = tent_ball_averages(space, F.abs2(), F.grid, balls);
  // x lies in B(c, s) iff d(c, x) < s: suffix max over s > d
  const int maxd = space.max_lattice_distance();
  RMatrix suffix = RMatrix::Zero(v.rows(), maxd + 1);
  for (Eigen::Index c = 0; c < v.rows(); ++c) {
    double run = 0.0;
    Eigen::Index b = v.cols() - 1;
    for (int d = maxd; d >= 0; --d) {
      while (b >= 0 && balls.shells[static_cast<std::size_t>(b)] > d) {
        run = std::max(run, v(c, b));
        --b;
      }
      suffix(c, d) = run;
    }
  }
  return detail::max_over_containing_balls(space, suffix).cwiseSqrt();
}

/// ||F||_{T^p}: L^p norm of AF for p < inf, sup of CF for p = inf.
inline double tent_norm(const MetricMeasureSpace& space, const FieldFunction& F, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("tent_norm: p must be >= 1");
  if (std::isinf(p)) {
    const RVector c = carleson_functional(space, F);
    return c.size() ? c.maxCoeff() : 0.0;
  }
  return space.norm_real(conical_square(space, F), p);
}

/// F*(x) = max over the cone d(y, x) < t_k of |F(y, t_k)|.
inline RVector nontangential_max(const MetricMeasureSpace& space, const FieldFunction& F) {
  detail::check_field(space, F.values.rows());
  const RMatrix a = F.abs();
  RVector out = RVector::Zero(static_cast<Eigen::Index>(space.size()));
  for (std::size_t k = 0; k < F.nodes(); ++k) {
    out = out.cwiseMax(detail::ball_max(space, space.shells_below(F.grid[k]), a.col(static_cast<Eigen::Index>(k))));
  }
  return out;
}

/// h(y, t_k) = (A_{t_k} |e^{-t_k^{2m} L} f|^2)(y)^{1/2}, the field whose
/// non-tangential maximum is N_{h,L} f.
inline FieldFunction heat_average_field(const SectorialOperator& op, const CVector& f, const TGrid& grid,
                                        const SemigroupOptions& opt = {}) {
  const auto& space = op.space();
  std::vector<double> times;
  for (double t : grid.nodes()) times.push_back(std::pow(t, op.order_2m()));
  const auto u = semigroup_grid(op, times, CMatrix(f), opt);
  const RVector ones = RVector::Ones(static_cast<Eigen::Index>(space.size()));
  CMatrix h(static_cast<Eigen::Index>(space.size()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int shells = space.shells_below(grid[k]);
    const RVector a2 = u[k].col(0).cwiseAbs2();
    h.col(static_cast<Eigen::Index>(k)) =
        detail::ball_mass(space, shells, a2).cwiseQuotient(detail::ball_mass(space, shells, ones)).cwiseSqrt().cast<Complex>();
  }
  return {h, grid};
}

/// N_{h,L} f(x) = max over d(y, x) < t_k of (V(y,t_k)^{-1} sum_{B(y,t_k)} |e^{-t_k^{2m}L} f|^2 mu)^{1/2}.
inline RVector maximal_Nh(const SectorialOperator& op, const CVector& f, const TGrid& grid,
                          const SemigroupOptions& opt = {}) {
  return nontangential_max(op.space(), heat_average_field(op, f, grid, opt));
}

/// Uncentered L^2 maximal function over all lattice balls containing x.
inline RVector uncentered_M2(const MetricMeasureSpace& space, const CVector& f) {
  detail::check_field(space, f.size());
  const int maxd = space.max_lattice_distance();
  // suffix(c, d) = max over s > d of the average of |f|^2 on B(c, s)
  RMatrix suffix(static_cast<Eigen::Index>(space.size()), maxd + 1);
  parallel_for(space.size(), [&](std::size_t c) {
    const auto row = space.shell_prefix(c, maxd + 1);
    std::vector<double> avg(static_cast<std::size_t>(maxd) + 2, 0.0);
    double mass = 0.0, vol = 0.0;
    std::size_t i = 0;
    for (int s = 1; s <= maxd + 1; ++s) {
      for (; i < row.size() && space.lattice_distance(c, row[i]) < s; ++i) {
        mass += space.weight(row[i]) * std::norm(f[row[i]]);
        vol += space.weight(row[i]);
      }
      avg[static_cast<std::size_t>(s)] = mass / vol;
    }
    double run = 0.0;
    for (int d = maxd; d >= 0; --d) {
      run = std::max(run, avg[static_cast<std::size_t>(d) + 1]);
      suffix(static_cast<Eigen::Index>(c), d) = run;
    }
  });
  return detail::max_over_containing_balls(space, suffix).cwiseSqrt();
}

/// sum_{y,k} |F| w mu_y dlog, the pairing of |F| with d nu = w mu dt/t.
inline double measure_pairing(const MetricMeasureSpace& space, const FieldFunction& F, const RMatrix& w) {
  detail::check_field(space, F.values.rows());
  return F.grid.dlog() * space.weights().dot(F.abs().cwiseProduct(w).rowwise().sum());
}

struct DualityReport {
  double p = 2.0;
  bool vacuous = false;       // F or G vanishes: every ratio is 0/0
  double pairing = 0.0;       // sum |F G| mu dlog
  double cone_ratio = 0.0;    // (a) pairing / int AF AG
  double holder_ratio = 0.0;  // pairing / (||F||_{T^p} ||G||_{T^p'}), 1 < p < inf
  double carleson_ratio = 0.0;  // (b) pairing / int AF CG, p = 1
  double product_ratio = 0.0;   // (c) ||C(FG)||_p / (||F*||_p ||CG||_inf), p > 2
};

/// Measured ratios for the tent-space duality inequalities.
inline DualityReport duality_checks(const MetricMeasureSpace& space, const FieldFunction& F,
                                    const FieldFunction& G, double p) {
  if (!(p >= 1.0) || std::isinf(p)) throw InvalidArgument("duality_checks: p must lie in [1, inf)");
  DualityReport rep;
  rep.p = p;
  const FieldFunction FG = F * G;
  rep.pairing = measure_pairing(space, FG, RMatrix::Ones(FG.values.rows(), FG.values.cols()));
  if (F.values.isZero(0.0) || G.values.isZero(0.0)) {
    rep.vacuous = true;
    return rep;
  }
  const RVector aF = conical_square(space, F), aG = conical_square(space, G);
  rep.cone_ratio = rep.pairing / space.weights().dot(aF.cwiseProduct(aG));
  if (p > 1.0) {
    const double pp = p / (p - 1.0);
    rep.holder_ratio = rep.pairing / (space.norm_real(aF, p) * space.norm_real(aG, pp));
  }
  const RVector cG = carleson_functional(space, G);
  if (p == 1.0) rep.carleson_ratio = rep.pairing / space.weights().dot(aF.cwiseProduct(cG));
  if (p > 2.0) {
    const double lhs = space.norm_real(carleson_functional(space, FG), p);
    rep.product_ratio = lhs / (space.norm_real(nontangential_max(space, F), p) * cG.maxCoeff());
  }
  return rep;
}

/// Ratio sum |F| d nu / (||F*||_1 ||nu||_C) for d nu = w mu dt/t.
inline double carleson_duality_ratio(const MetricMeasureSpace& space, const FieldFunction& F, const RMatrix& w) {
  const double lhs = measure_pairing(space, F, w);
  const double rhs = space.norm_real(nontangential_max(space, F), 1.0) * carleson_norm(space, w, F.grid);
  return rhs > 0.0 ? lhs / rhs : 0.0;
}

}  // namespace paralab

#pragma once
// Finite spaces of homogeneous type: uniform grids with the wrap-aware l1
// graph metric, open balls, dyadic annuli and the ball averaging operator.

#include "paralab/core.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <limits>
#include <numeric>
#include <optional>
#include <span>

namespace paralab {

enum class Topology { periodic, bounded };

inline const char* to_string(Topology t) {
  return t == Topology::periodic ? "periodic" : "bounded";
}

/// Open ball {y : d(y, center) < radius}.
struct Ball {
  std::size_t center = 0;
  double radius = 1.0;

  Ball scaled(double factor) const { return {center, radius * factor}; }
};

class MetricMeasureSpace {
 public:
  static constexpr std::size_t kDefaultNodeBudget = 1u << 16;
  static constexpr std::size_t kNeighborTableBudget = 8192;

  MetricMeasureSpace(std::vector<int> dims, double spacing, Topology topology,
                     std::size_t base_point = 0)
      : dims_(std::move(dims)), spacing_(spacing), topology_(topology) {
    if (dims_.empty()) throw InvalidArgument("grid space: empty dims");
    if (!(spacing_ > 0.0)) throw InvalidArgument("grid space: spacing must be > 0");
    size_ = 1;
    strides_.resize(dims_.size());
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      if (dims_[d] <= 0) throw InvalidArgument("grid space: dims must be positive");
      strides_[d] = size_;
      size_ *= static_cast<std::size_t>(dims_[d]);
    }
    if (base_point >= size_) throw InvalidArgument("grid space: base point out of range");
    base_point_ = base_point;
    cell_measure_ = std::pow(spacing_, static_cast<double>(dims_.size()));
    weights_ = RVector::Constant(static_cast<Eigen::Index>(size_), cell_measure_);
    max_lattice_ = 0;
    for (int n : dims_) max_lattice_ += topology_ == Topology::periodic ? n / 2 : n - 1;
  }

  std::size_t size() const { return size_; }
  const std::vector<int>& dims() const { return dims_; }
  double spacing() const { return spacing_; }
  Topology topology() const { return topology_; }
  int ambient_dim() const { return static_cast<int>(dims_.size()); }
  std::size_t base_point() const { return base_point_; }
  const RVector& weights() const { return weights_; }
  double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }
  double total_measure() const { return weights_.sum(); }
  int max_lattice_distance() const { return max_lattice_; }
  double diameter() const { return max_lattice_ * spacing_; }

  std::vector<int> coords(std::size_t i) const {
    std::vector<int> c(dims_.size());
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      c[d] = static_cast<int>((i / strides_[d]) % static_cast<std::size_t>(dims_[d]));
    }
    return c;
  }

  std::size_t index(const std::vector<int>& c) const {
    std::size_t i = 0;
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      i += static_cast<std::size_t>(c[d]) * strides_[d];
    }
    return i;
  }

  /// Graph distance in lattice steps.
  int lattice_distance(std::size_t i, std::size_t j) const {
    int total = 0;
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      const int n = dims_[d];
      const int a = static_cast<int>((i / strides_[d]) % static_cast<std::size_t>(n));
      const int b = static_cast<int>((j / strides_[d]) % static_cast<std::size_t>(n));
      int delta = std::abs(a - b);
      if (topology_ == Topology::periodic) delta = std::min(delta, n - delta);
      total += delta;
    }
    return total;
  }

  double distance(std::size_t i, std::size_t j) const {
    return lattice_distance(i, j) * spacing_;
  }

  /// Number of lattice shells k >= 0 with k * spacing < radius, i.e. the
  /// shells met by the open ball of that radius.
  int shells_below(double radius) const {
    if (!(radius > 0.0)) return 0;
    long k = static_cast<long>(std::ceil(radius / spacing_));
    while (k > 0 && (k - 1) * spacing_ >= radius) --k;
    while (k * spacing_ < radius) ++k;
    return static_cast<int>(std::min<long>(k, max_lattice_ + 1));
  }

  /// Members of B(center, radius), ordered by distance then index.
  std::span<const std::uint32_t> ball_members(std::size_t center, double radius) const {
    return shell_prefix(center, shells_below(radius));
  }

  /// Members within `shells` lattice shells (distance < shells * spacing).
  std::span<const std::uint32_t> shell_prefix(std::size_t center, int shells) const {
    ensure_neighbor_table();
    const int s = std::clamp(shells, 0, max_lattice_ + 1);
    const std::size_t count =
        shell_counts_[center * static_cast<std::size_t>(max_lattice_ + 2) +
                      static_cast<std::size_t>(s)];
    return {order_.data() + center * size_, count};
  }

  std::size_t ball_count(std::size_t center, double radius) const {
    return ball_members(center, radius).size();
  }

  /// Calls f(j) for each grid-graph neighbor j of i (one lattice step away).
  template <class F>
  void visit_neighbors(std::size_t i, F&& f) const {
    for (std::size_t d = 0; d < dims_.size(); ++d) {
      const int n = dims_[d];
      if (n == 1) continue;
      const int c = static_cast<int>((i / strides_[d]) % static_cast<std::size_t>(n));
      const std::size_t base = i - static_cast<std::size_t>(c) * strides_[d];
      if (topology_ == Topology::periodic) {
        f(base + static_cast<std::size_t>((c + n - 1) % n) * strides_[d]);
        if (n > 2) f(base + static_cast<std::size_t>((c + 1) % n) * strides_[d]);
      } else {
        if (c > 0) f(i - strides_[d]);
        if (c + 1 < n) f(i + strides_[d]);
      }
    }
  }

  std::vector<std::size_t> grid_neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    visit_neighbors(i, [&](std::size_t j) { out.push_back(j); });
    return out;
  }

  /// Largest lattice distance from c to any point.
  int eccentricity(std::size_t c) const {
    ensure_neighbor_table();
    return lattice_distance(c, order_[c * size_ + size_ - 1]);
  }

  // -- L^p(mu) helpers -------------------------------------------------------

  Complex inner(const CVector& f, const CVector& g) const {
    Complex s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += weights_[i] * f[i] * std::conj(g[i]);
    return s;
  }

  double norm(const CVector& f, double p = 2.0) const {
    if (std::isinf(p)) return max_abs(f);
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += weights_[i] * std::pow(std::abs(f[i]), p);
    return std::pow(s, 1.0 / p);
  }

  double norm_real(const RVector& f, double p) const {
    if (std::isinf(p)) return f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += weights_[i] * std::pow(std::abs(f[i]), p);
    return std::pow(s, 1.0 / p);
  }

  Complex mean(const CVector& f) const {
    Complex s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += weights_[i] * f[i];
    return s / total_measure();
  }

  /// Restriction to a point set, zero elsewhere.
  CVector restrict_to(const CVector& f, std::span<const std::size_t> set) const {
    CVector out = CVector::Zero(f.size());
    for (std::size_t i : set) out[static_cast<Eigen::Index>(i)] = f[static_cast<Eigen::Index>(i)];
    return out;
  }

  double norm_on(const CVector& f, std::span<const std::size_t> set, double p = 2.0) const {
    if (std::isinf(p)) {
      double m = 0.0;
      for (std::size_t i : set) m = std::max(m, std::abs(f[static_cast<Eigen::Index>(i)]));
      return m;
    }
    double s = 0.0;
    for (std::size_t i : set) {
      s += weight(i) * std::pow(std::abs(f[static_cast<Eigen::Index>(i)]), p);
    }
    return std::pow(s, 1.0 / p);
  }

  double measure_of(std::span<const std::size_t> set) const {
    double s = 0.0;
    for (std::size_t i : set) s += weight(i);
    return s;
  }

  /// dist(E, F) between two nonempty point sets.
  double set_distance(std::span<const std::size_t> e, std::span<const std::size_t> f) const {
    int best = std::numeric_limits<int>::max();
    for (std::size_t a : e) {
      for (std::size_t b : f) best = std::min(best, lattice_distance(a, b));
    }
    return best * spacing_;
  }

 private:
  void ensure_neighbor_table() const {
    std::call_once(table_once_, [this] { build_neighbor_table(); });
  }

  void build_neighbor_table() const {
    if (size_ > kNeighborTableBudget) {
      throw BudgetExceeded("neighbor table: " + std::to_string(size_) +
                           " points exceeds budget " + std::to_string(kNeighborTableBudget));
    }
    const std::size_t shells = static_cast<std::size_t>(max_lattice_ + 2);
    order_.assign(size_ * size_, 0);
    shell_counts_.assign(size_ * shells, 0);
    parallel_for(size_, [&](std::size_t c) {
      std::vector<std::size_t> bucket(shells, 0);
      std::vector<int> dist(size_);
      for (std::size_t j = 0; j < size_; ++j) {
        dist[j] = lattice_distance(c, j);
        ++bucket[static_cast<std::size_t>(dist[j]) + 1];
      }
      for (std::size_t k = 1; k < shells; ++k) bucket[k] += bucket[k - 1];
      std::size_t* counts = shell_counts_.data() + c * shells;
      for (std::size_t k = 0; k < shells; ++k) counts[k] = bucket[k];
      std::uint32_t* row = order_.data() + c * size_;
      std::vector<std::size_t> fill(bucket.begin(), bucket.end());
      for (std::size_t j = 0; j < size_; ++j) {
        row[fill[static_cast<std::size_t>(dist[j])]++] = static_cast<std::uint32_t>(j);
      }
    });
  }

  std::vector<int> dims_;
  std::vector<std::size_t> strides_;
  double spacing_;
  Topology topology_;
  std::size_t size_ = 0;
  std::size_t base_point_ = 0;
  double cell_measure_ = 1.0;
  RVector weights_;
  int max_lattice_ = 0;

  mutable std::once_flag table_once_;
  mutable std::vector<std::uint32_t> order_;
  mutable std::vector<std::size_t> shell_counts_;
};

using SpacePtr = std::shared_ptr<const MetricMeasureSpace>;

inline SpacePtr build_grid_space(std::vector<int> dims, double spacing, Topology topology,
                                 std::size_t node_budget = MetricMeasureSpace::kDefaultNodeBudget) {
  if (dims.empty()) throw InvalidArgument("build_grid_space: empty dims");
  std::size_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw InvalidArgument("build_grid_space: dims must be positive");
    n *= static_cast<std::size_t>(d);
    if (n > node_budget) {
      throw BudgetExceeded("build_grid_space: node budget " + std::to_string(node_budget) +
                           " exceeded");
    }
  }
  return std::make_shared<const MetricMeasureSpace>(std::move(dims), spacing, topology);
}

inline double ball_volume(const MetricMeasureSpace& space, const Ball& ball) {
  double v = 0.0;
  for (std::uint32_t j : space.ball_members(ball.center, ball.radius)) v += space.weight(j);
  return v;
}

/// S_0(B) = B, S_j(B) = 2^j B \ 2^{j-1} B. Returned sorted by index.
inline std::vector<std::size_t> annulus(const MetricMeasureSpace& space, const Ball& ball, int j) {
  if (j < 0) throw InvalidArgument("annulus: j must be >= 0");
  const double outer = std::ldexp(ball.radius, j);
  const int inner_shells = j == 0 ? 0 : space.shells_below(std::ldexp(ball.radius, j - 1));
  const auto all = space.ball_members(ball.center, outer);
  const auto inner = space.shell_prefix(ball.center, inner_shells);
  std::vector<std::size_t> out(all.begin() + static_cast<std::ptrdiff_t>(inner.size()), all.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> ball_points(const MetricMeasureSpace& space, const Ball& ball) {
  const auto m = space.ball_members(ball.center, ball.radius);
  std::vector<std::size_t> out(m.begin(), m.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// A_t f(x) = V(x,t)^{-1} sum_{d(y,x)<t} mu_y f(y).
inline CVector average(const MetricMeasureSpace& space, double t, const CVector& f) {
  if (!(t > 0.0)) throw InvalidArgument("average: t must be > 0");
  const int shells = space.shells_below(t);
  CVector out(f.size());
  parallel_for(space.size(), [&](std::size_t x) {
    Complex s = 0.0;
    double v = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) {
      s += space.weight(y) * f[y];
      v += space.weight(y);
    }
    out[static_cast<Eigen::Index>(x)] = s / v;
  });
  return out;
}

/// mu-adjoint of A_t: (A_t^* g)(y) = sum_{x in B(y,t)} mu_x g(x) / V(x,t).
inline CVector average_adjoint(const MetricMeasureSpace& space, double t, const CVector& g) {
  if (!(t > 0.0)) throw InvalidArgument("average_adjoint: t must be > 0");
  const int shells = space.shells_below(t);
  RVector vol(static_cast<Eigen::Index>(space.size()));
  for (std::size_t x = 0; x < space.size(); ++x) {
    double v = 0.0;
    for (std::uint32_t y : space.shell_prefix(x, shells)) v += space.weight(y);
    vol[static_cast<Eigen::Index>(x)] = v;
  }
  CVector out(g.size());
  parallel_for(space.size(), [&](std::size_t y) {
    Complex s = 0.0;
    for (std::uint32_t x : space.shell_prefix(y, shells)) s += space.weight(x) * g[x] / vol[x];
    out[static_cast<Eigen::Index>(y)] = s;
  });
  return out;
}

struct DoublingReport {
  double A1 = 1.0;
  double A2 = 1.0;
  double n = 0.0;
  bool zero_variance = false;
  std::size_t samples = 0;
};

/// Samples (x, r, lambda) and measures the doubling constant A1 together with
/// the homogeneity fit V(x, lambda r) <= A2 lambda^n V(x, r).
inline DoublingReport doubling_report(const MetricMeasureSpace& space, std::size_t samples,
                                      Rng& rng) {
  if (samples == 0) throw InvalidArgument("doubling_report: samples must be >= 1");
  const double h = space.spacing();
  const double r_hi = std::max(2.0 * h, space.diameter() / 8.0);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  std::uniform_real_distribution<double> log_r(std::log(h), std::log(r_hi));
  std::uniform_real_distribution<double> log_lambda(0.0, std::log(4.0));

  DoublingReport rep;
  rep.samples = samples;
  std::vector<double> xs, ys;
  xs.reserve(samples);
  ys.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t x = pick(rng);
    const double r = std::exp(log_r(rng));
    const double lambda = std::exp(log_lambda(rng));
    const double v = ball_volume(space, {x, r});
    rep.A1 = std::max(rep.A1, ball_volume(space, {x, 2.0 * r}) / v);
    xs.push_back(std::log(lambda));
    ys.push_back(std::log(ball_volume(space, {x, lambda * r}) / v));
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(samples);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(samples);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    sxx += (xs[s] - mx) * (xs[s] - mx);
    sxy += (xs[s] - mx) * (ys[s] - my);
    syy += (ys[s] - my) * (ys[s] - my);
  }
  if (sxx <= 1e-300 || syy <= 1e-300) {
    rep.zero_variance = true;
    rep.n = 0.0;
  } else {
    rep.n = sxy / sxx;
  }
  rep.A2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    rep.A2 = std::max(rep.A2, std::exp(ys[s] - rep.n * xs[s]));
  }
  return rep;
}

/// Homogeneous dimension n measured with a fixed seed, used for the n/4m
/// hypotheses.
inline double homogeneous_dimension(const MetricMeasureSpace& space) {
  Rng rng(0x5eed);
  const auto rep = doubling_report(space, 400, rng);
  return rep.zero_variance ? static_cast<double>(space.ambient_dim()) : rep.n;
}

}  // namespace paralab

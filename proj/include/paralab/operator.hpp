#pragma once
// Discrete sectorial operators: divergence-form stencils with complex edge
// coefficients, resolvents, sectoriality diagnostics and a dense spectral
// oracle used as the independent reference for the functional calculus.

#include "paralab/space.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <optional>

namespace paralab {

enum class Boundary { periodic, dirichlet };

inline const char* to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "dirichlet";
}

/// One stencil edge. `j < 0` marks a Dirichlet half-edge to a ghost node.
struct Edge {
  std::size_t i = 0;
  long j = -1;
  int axis = 0;
};

/// Edges of the grid in canonical order: axis by axis, then by point index,
/// the forward edge i -> i + e_axis. Dirichlet grids add, per line, the
/// half-edge from the first node to its ghost before that node's forward edge.
inline std::vector<Edge> grid_edges(const MetricMeasureSpace& space, Boundary boundary) {
  std::vector<Edge> edges;
  const auto& dims = space.dims();
  std::size_t stride = 1;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const int n = dims[d];
    for (std::size_t i = 0; i < space.size(); ++i) {
      const int c = static_cast<int>((i / stride) % static_cast<std::size_t>(n));
      if (boundary == Boundary::dirichlet) {
        if (c == 0) edges.push_back({i, -1, static_cast<int>(d)});
        if (c + 1 < n) {
          edges.push_back({i, static_cast<long>(i + stride), static_cast<int>(d)});
        } else {
          edges.push_back({i, -1, static_cast<int>(d)});
        }
      } else if (n >= 2) {
        const std::size_t j = c + 1 < n ? i + stride : i - static_cast<std::size_t>(n - 1) * stride;
        edges.push_back({i, static_cast<long>(j), static_cast<int>(d)});
      }
    }
    stride *= static_cast<std::size_t>(n);
  }
  return edges;
}

/// Per-edge complex conductivities a_e with Re(a_e) >= delta > 0.
struct CoefficientField {
  std::vector<Complex> values;

  static CoefficientField uniform(std::size_t edges, Complex a) {
    return {std::vector<Complex>(edges, a)};
  }

  /// Real parts uniform in [delta, 1], imaginary parts uniform in
  /// [-slope, slope] * real part.
  static CoefficientField random(std::size_t edges, double delta, double slope, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> re(delta, 1.0);
    std::uniform_real_distribution<double> u(-slope, slope);
    CoefficientField c;
    c.values.reserve(edges);
    for (std::size_t e = 0; e < edges; ++e) {
      const double r = re(rng);
      c.values.emplace_back(r, r * u(rng));
    }
    return c;
  }

  double ellipticity() const {
    double d = std::numeric_limits<double>::infinity();
    for (Complex a : values) d = std::min(d, a.real());
    return d;
  }
  double bound() const {
    double m = 0.0;
    for (Complex a : values) m = std::max(m, std::abs(a));
    return m;
  }
  double angle() const {
    double m = 0.0;
    for (Complex a : values) m = std::max(m, std::abs(std::arg(a)));
    return m;
  }
};

/// Dense eigendecomposition L = V diag(lambda) V^{-1}.
struct SpectralOracle {
  CVector eigenvalues;
  CMatrix vectors;
  CMatrix inverse;
  bool hermitian = false;
  bool valid = false;
  double condition = 1.0;
  double residual = 0.0;

  /// g(L) f for a scalar symbol g evaluated on the eigenvalues.
  template <class G>
  CMatrix apply(G&& g, const CMatrix& f) const {
    CVector d(eigenvalues.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = g(eigenvalues[i]);
    return vectors * (d.asDiagonal() * (inverse * f));
  }
};

class SectorialOperator {
 public:
  static constexpr std::size_t kDenseBudget = 4096;

  SectorialOperator(SpacePtr space, SparseMatrix matrix, int order_2m, double sector_angle,
                    CMatrix kernel_basis, std::string label)
      : space_(std::move(space)),
        matrix_(std::move(matrix)),
        order_2m_(order_2m),
        omega_(sector_angle),
        kernel_(std::move(kernel_basis)),
        label_(std::move(label)) {
    matrix_.makeCompressed();
    const RVector& w = space_->weights();
    SparseMatrix adj = matrix_.adjoint();
    for (int k = 0; k < adj.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(adj, k); it; ++it) {
        it.valueRef() *= w[it.col()] / w[it.row()];
      }
    }
    adjoint_ = std::move(adj);
    adjoint_.makeCompressed();
    self_adjoint_ = (SparseMatrix(matrix_ - adjoint_)).norm() <= 1e-13 * std::max(1.0, matrix_.norm());
  }

  const MetricMeasureSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }
  std::size_t size() const { return space_->size(); }
  const SparseMatrix& matrix() const { return matrix_; }
  const SparseMatrix& adjoint_matrix() const { return adjoint_; }
  int order_2m() const { return order_2m_; }
  double sector_angle() const { return omega_; }
  bool self_adjoint() const { return self_adjoint_; }
  const std::string& label() const { return label_; }
  /// mu-orthonormal basis of ker L (N x dim).
  const CMatrix& kernel_basis() const { return kernel_; }
  bool has_kernel() const { return kernel_.cols() > 0; }

  CMatrix apply(const CMatrix& f) const { return matrix_ * f; }
  CMatrix apply_adjoint(const CMatrix& f) const { return adjoint_ * f; }

  /// mu-orthogonal projection onto ker L.
  CMatrix project_kernel(const CMatrix& f) const {
    if (!has_kernel()) return CMatrix::Zero(f.rows(), f.cols());
    const CMatrix coeff = kernel_.adjoint() * (space_->weights().asDiagonal() * f);
    return kernel_ * coeff;
  }

  /// f - Pf, the component in ran(L).
  CMatrix project_range(const CMatrix& f) const {
    if (!has_kernel()) return f;
    return f - project_kernel(f);
  }

  /// Upper bound for the 2-norm: max of the 1- and infinity-norms.
  double norm_bound() const {
    RVector rows = RVector::Zero(static_cast<Eigen::Index>(size()));
    RVector cols = RVector::Zero(static_cast<Eigen::Index>(size()));
    for (int k = 0; k < matrix_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it) {
        rows[it.row()] += std::abs(it.value());
        cols[it.col()] += std::abs(it.value());
      }
    }
    return std::max(rows.maxCoeff(), cols.maxCoeff());
  }

  const SpectralOracle& oracle() const {
    std::call_once(oracle_once_, [this] { oracle_ = compute_oracle(); });
    if (!oracle_) throw BudgetExceeded("spectral oracle: N exceeds dense budget");
    return *oracle_;
  }

  /// Installs a precomputed decomposition (e.g. from a cache); false if the
  /// oracle was already computed or installed.
  bool adopt_oracle(SpectralOracle o) const {
    bool taken = false;
    std::call_once(oracle_once_, [&] {
      oracle_ = std::move(o);
      taken = true;
    });
    return taken;
  }

  bool oracle_available() const {
    if (size() > kDenseBudget) return false;
    return oracle().valid;
  }

  /// Smallest nonzero and largest eigenvalue moduli on ran(L).
  std::pair<double, double> spectral_range() const {
    std::call_once(range_once_, [this] { range_ = compute_range(); });
    return range_;
  }

 private:
  std::optional<SpectralOracle> compute_oracle() const {
    if (size() > kDenseBudget) return std::nullopt;
    SpectralOracle o;
    const CMatrix dense = CMatrix(matrix_);
    const RVector& w = space_->weights();
    const RVector sq = w.cwiseSqrt();
    const RVector isq = sq.cwiseInverse();
    if (self_adjoint_) {
      CMatrix sym = sq.asDiagonal() * dense * isq.asDiagonal();
      sym = 0.5 * (sym + sym.adjoint()).eval();
      Eigen::SelfAdjointEigenSolver<CMatrix> es(sym);
      if (es.info() != Eigen::Success) throw NumericalFailure("spectral oracle: eigensolver failed");
      o.eigenvalues = es.eigenvalues().cast<Complex>();
      o.vectors = isq.asDiagonal() * es.eigenvectors();
      o.inverse = es.eigenvectors().adjoint() * sq.asDiagonal();
      o.hermitian = true;
      o.condition = sq.maxCoeff() / sq.minCoeff();
    } else {
      Eigen::ComplexEigenSolver<CMatrix> es(dense);
      if (es.info() != Eigen::Success) throw NumericalFailure("spectral oracle: eigensolver failed");
      o.eigenvalues = es.eigenvalues();
      o.vectors = es.eigenvectors();
      for (Eigen::Index c = 0; c < o.vectors.cols(); ++c) o.vectors.col(c).normalize();
      Eigen::PartialPivLU<CMatrix> lu(o.vectors);
      o.inverse = lu.inverse();
      Eigen::JacobiSVD<CMatrix> svd(o.vectors);
      const auto& s = svd.singularValues();
      o.condition = s[s.size() - 1] > 0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
    }
    // Kernel eigenvalues are snapped to exactly zero so symbols see g(0).
    const double scale = o.eigenvalues.cwiseAbs().maxCoeff();
    const Eigen::Index kdim = kernel_.cols();
    if (kdim > 0) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(o.eigenvalues.size()));
      std::iota(idx.begin(), idx.end(), 0);
      std::partial_sort(idx.begin(), idx.begin() + kdim, idx.end(), [&](auto a, auto b) {
        return std::abs(o.eigenvalues[a]) < std::abs(o.eigenvalues[b]);
      });
      for (Eigen::Index k = 0; k < kdim; ++k) {
        if (std::abs(o.eigenvalues[idx[static_cast<std::size_t>(k)]]) <= 1e-9 * scale) {
          o.eigenvalues[idx[static_cast<std::size_t>(k)]] = 0.0;
        }
      }
    }
    const CMatrix rebuilt = o.vectors * o.eigenvalues.asDiagonal() * o.inverse;
    o.residual = (rebuilt - dense).norm() / std::max(dense.norm(), 1e-300);
    o.valid = o.condition <= 1e8 && o.residual <= 1e-10;
    return o;
  }

  std::pair<double, double> compute_range() const {
    if (size() <= 1024) {
      const auto& o = oracle();
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (Eigen::Index i = 0; i < o.eigenvalues.size(); ++i) {
        const double a = std::abs(o.eigenvalues[i]);
        if (a == 0.0) continue;
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
      return {lo, hi};
    }
    Rng rng(17);
    CVector v = project_range(random_gaussian(static_cast<Eigen::Index>(size()), rng));
    double hi = 0.0;
    for (int it = 0; it < 200; ++it) {
      CVector w = matrix_ * v;
      hi = w.norm() / v.norm();
      v = w / w.norm();
    }
    SparseMatrix shifted = matrix_;
    SparseMatrix id(matrix_.rows(), matrix_.cols());
    id.setIdentity();
    shifted += Complex(1e-9 * norm_bound()) * id;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw NumericalFailure("spectral range: factorization failed");
    CVector u = project_range(random_gaussian(static_cast<Eigen::Index>(size()), rng));
    double lo = 0.0;
    for (int it = 0; it < 100; ++it) {
      CVector w = project_range(CVector(lu.solve(u)));
      lo = u.norm() / w.norm();
      u = w / w.norm();
    }
    return {lo, hi};
  }

  SpacePtr space_;
  SparseMatrix matrix_;
  SparseMatrix adjoint_;
  int order_2m_;
  double omega_;
  CMatrix kernel_;
  std::string label_;
  bool self_adjoint_ = false;

  mutable std::once_flag oracle_once_;
  mutable std::optional<SpectralOracle> oracle_;
  mutable std::once_flag range_once_;
  mutable std::pair<double, double> range_{0.0, 0.0};
};

using OperatorPtr = std::shared_ptr<const SectorialOperator>;

/// L^* (the mu-adjoint) as an operator in its own right. Its kernel is taken
/// from L after checking that L^* annihilates it too.
inline OperatorPtr adjoint_operator(const SectorialOperator& op) {
  if (op.has_kernel()) {
    const double defect = CMatrix(op.apply_adjoint(op.kernel_basis())).norm();
    if (defect > 1e-10 * std::max(1.0, op.norm_bound())) {
      throw NumericalFailure("adjoint_operator: ker L is not annihilated by L^* (defect " +
                             std::to_string(defect) + ")");
    }
  }
  return std::make_shared<const SectorialOperator>(op.space_ptr(), op.adjoint_matrix(), op.order_2m(),
                                                   op.sector_angle(), op.kernel_basis(), op.label() + "*");
}

/// L = -div(A grad) on the grid: (Lu)_i = sum_e a_e (u_i - u_j) / h^2, with
/// Dirichlet half-edges adding a_e / h^2 to the diagonal.
inline OperatorPtr build_divergence_form(SpacePtr space, const CoefficientField& coeffs,
                                         Boundary boundary) {
  const auto& sp = *space;
  if ((boundary == Boundary::periodic) != (sp.topology() == Topology::periodic)) {
    throw InvalidArgument(std::string("build_divergence_form: boundary ") + to_string(boundary) +
                          " does not match space topology " + to_string(sp.topology()));
  }
  const auto edges = grid_edges(sp, boundary);
  if (coeffs.values.size() != edges.size()) {
    throw InvalidArgument("build_divergence_form: " + std::to_string(coeffs.values.size()) +
                          " coefficients for " + std::to_string(edges.size()) + " edges");
  }
  for (Complex a : coeffs.values) {
    if (!(a.real() > 0.0)) throw InvalidArgument("build_divergence_form: ellipticity violated (Re a_e <= 0)");
  }
  const double inv_h2 = 1.0 / (sp.spacing() * sp.spacing());
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(edges.size() * 4);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Complex a = coeffs.values[e] * inv_h2;
    const auto i = static_cast<Eigen::Index>(edges[e].i);
    trip.emplace_back(i, i, a);
    if (edges[e].j >= 0) {
      const auto j = static_cast<Eigen::Index>(edges[e].j);
      trip.emplace_back(j, j, a);
      trip.emplace_back(i, j, -a);
      trip.emplace_back(j, i, -a);
    }
  }
  const auto n = static_cast<Eigen::Index>(sp.size());
  SparseMatrix L(n, n);
  L.setFromTriplets(trip.begin(), trip.end());

  CMatrix kernel(n, 0);
  if (boundary == Boundary::periodic) {
    kernel = CMatrix::Constant(n, 1, Complex(1.0 / std::sqrt(sp.total_measure())));
  }
  const double omega = coeffs.angle();
  if (omega >= kPi / 2) throw InvalidArgument("build_divergence_form: sector angle >= pi/2");
  std::string label = std::string("divergence-form/") + to_string(boundary);
  return std::make_shared<const SectorialOperator>(std::move(space), std::move(L), 2, omega,
                                                   std::move(kernel), std::move(label));
}

inline OperatorPtr build_divergence_form(SpacePtr space, Complex uniform_coefficient,
                                         Boundary boundary) {
  const auto edges = grid_edges(*space, boundary).size();
  return build_divergence_form(std::move(space), CoefficientField::uniform(edges, uniform_coefficient),
                               boundary);
}

/// L^p as an operator of order 2mp (the higher-order emulation).
inline OperatorPtr operator_power(const SectorialOperator& op, int power) {
  if (power < 1) throw InvalidArgument("operator_power: power must be >= 1");
  SparseMatrix m = op.matrix();
  for (int k = 1; k < power; ++k) m = (op.matrix() * m).pruned();
  const double omega = op.sector_angle() * power;
  if (omega >= kPi / 2) throw InvalidArgument("operator_power: sector angle >= pi/2");
  return std::make_shared<const SectorialOperator>(op.space_ptr(), std::move(m),
                                                   op.order_2m() * power, omega, op.kernel_basis(),
                                                   op.label() + "^" + std::to_string(power));
}

/// c L for c > 0.
inline OperatorPtr operator_scaled(const SectorialOperator& op, double c) {
  if (!(c > 0.0)) throw InvalidArgument("operator_scaled: c must be > 0");
  SparseMatrix m = Complex(c) * op.matrix();
  return std::make_shared<const SectorialOperator>(op.space_ptr(), std::move(m), op.order_2m(),
                                                   op.sector_angle(), op.kernel_basis(), op.label());
}

/// Solves (zeta I - L) g = f.
inline CMatrix resolvent_apply(const SectorialOperator& op, Complex zeta, const CMatrix& f) {
  if (std::abs(zeta) > 0 && std::abs(std::arg(zeta)) <= op.sector_angle()) {
    throw InvalidArgument("resolvent_apply: zeta lies in the spectral sector");
  }
  SparseMatrix a = -op.matrix();
  SparseMatrix id(a.rows(), a.cols());
  id.setIdentity();
  a += zeta * id;
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    throw NumericalFailure("resolvent_apply: factorization failed at |zeta| = " +
                           std::to_string(std::abs(zeta)));
  }
  CMatrix g = lu.solve(f);
  const double res = (a * g - f).norm();
  if (!(res <= 1e-10 * std::max(f.norm(), 1e-300))) {
    throw NumericalFailure("resolvent_apply: residual " + std::to_string(res / f.norm()) +
                           " at distance " + std::to_string(std::abs(zeta)) + " from the origin");
  }
  return g;
}

struct SectorialityReport {
  double constant = 0.0;
  Complex worst_zeta = 0.0;
};

/// Estimates C_sigma = max |zeta| ||(zeta - L)^{-1}|| over zeta on the rays
/// arg zeta = +-sigma, with the norm from 20 steps of power iteration on 8
/// random probes.
inline SectorialityReport verify_sectoriality(const SectorialOperator& op, double sigma,
                                              int ray_samples = 2, int magnitude_samples = 12,
                                              std::uint64_t seed = 7) {
  if (!(sigma > op.sector_angle())) throw InvalidArgument("verify_sectoriality: sigma <= omega");
  const auto [lo, hi] = op.spectral_range();
  const double a = std::log(std::max(lo, 1e-300) / 100.0);
  const double b = std::log(hi * 100.0);
  const auto n = static_cast<Eigen::Index>(op.size());
  const RVector& w = op.space().weights();
  SectorialityReport rep;
  std::vector<Complex> zetas;
  for (int r = 0; r < ray_samples; ++r) {
    const double sign = r % 2 == 0 ? 1.0 : -1.0;
    for (int s = 0; s < magnitude_samples; ++s) {
      const double t = magnitude_samples == 1 ? 0.5 : double(s) / (magnitude_samples - 1);
      zetas.push_back(std::polar(std::exp(a + t * (b - a)), sign * sigma));
    }
  }
  std::vector<double> values(zetas.size());
  parallel_for(zetas.size(), [&](std::size_t z) {
    const Complex zeta = zetas[z];
    SparseMatrix id(n, n);
    id.setIdentity();
    SparseMatrix fwd = zeta * id - op.matrix();
    SparseMatrix bwd = std::conj(zeta) * id - op.adjoint_matrix();
    Eigen::SparseLU<SparseMatrix> lf, lb;
    lf.compute(fwd);
    lb.compute(bwd);
    Rng rng(seed + z);
    double best = 0.0;
    for (int p = 0; p < 8; ++p) {
      CVector v = random_gaussian(n, rng);
      double est = 0.0;
      for (int it = 0; it < 20; ++it) {
        const double nv = std::sqrt((w.array() * v.array().abs2()).sum());
        v /= nv;
        CVector g = lf.solve(v);
        est = std::sqrt((w.array() * g.array().abs2()).sum());
        v = lb.solve(g);
      }
      best = std::max(best, est);
    }
    values[z] = std::abs(zeta) * best;
  });
  for (std::size_t z = 0; z < zetas.size(); ++z) {
    if (values[z] > rep.constant) {
      rep.constant = values[z];
      rep.worst_zeta = zetas[z];
    }
  }
  return rep;
}

/// Largest |arg| of sampled Rayleigh quotients <Lf, f>_mu / <f, f>_mu.
inline double numerical_range_angle(const SectorialOperator& op, int samples, std::uint64_t seed) {
  Rng rng(seed);
  const auto& sp = op.space();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const CVector f = random_gaussian(static_cast<Eigen::Index>(op.size()), rng);
    const CVector lf = op.matrix() * f;
    const Complex q = sp.inner(lf, f) / sp.inner(f, f);
    if (std::abs(q) > 0) worst = std::max(worst, std::abs(std::arg(q)));
  }
  return worst;
}

}  // namespace paralab

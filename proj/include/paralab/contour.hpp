#pragma once
// Cauchy-integral evaluation of g(L) on ran(L) for many symbols at once.
//
// The contour is the boundary of the sector |arg z| < theta, traversed from
// infinity e^{i theta} to 0 to infinity e^{-i theta}. On each ray the
// trapezoid rule in log r is used with nodes on the fixed lattice 2^{j/q}, so
// all symbols share resolvents. Nodes far outside the spectrum are not
// solved: beyond it (zeta - L)^{-1} = sum_i L^i / zeta^{i+1}, below it
// (zeta - L)^{-1} Q = -sum_i zeta^i L^{-i-1} Q, and in both cases the node
// sums collapse to scalar moments.

#include "paralab/operator.hpp"

#include <Eigen/SparseLU>

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace paralab {

using Symbol = std::function<Complex(Complex)>;

struct ContourOptions {
  int q = 0;                   // nodes per octave on each ray; 0 picks it from the sector
  double drop_tol = 1e-18;     // node significance cut, relative to the symbol's peak
  double neumann_ratio = 32.0; // |zeta| >= ratio ||L|| or <= lambda_min / ratio use series
  int neumann_terms = 12;
  std::size_t block = 32;      // resolvent solves per accumulation block
  int scan_lo = -300;          // octave range scanned for the symbol's support
  int scan_hi = 400;
};

struct ContourPlan {
  std::vector<Complex> nodes;  // solved nodes
  CMatrix weights;             // symbols x nodes: w_j g_k(zeta_j)
  CMatrix moments;             // symbols x terms: sum over series nodes w g zeta^{-i-1}
  CMatrix low_moments;         // symbols x terms: sum over low series nodes w g zeta^i
  std::size_t series_nodes = 0;
  std::size_t low_nodes = 0;
  bool truncated = false;      // some symbol still significant at the scan edge
};

class ContourEngine {
 public:
  explicit ContourEngine(const SectorialOperator& op, ContourOptions opt = {})
      : op_(op), opt_(opt) {
    if (opt_.q < 0) throw InvalidArgument("contour: q must be >= 0");
    theta_ = 0.5 * (op.sector_angle() + kPi / 2);
    if (opt_.q == 0) {
      // trapezoid error ~ exp(-2 pi d q / ln 2) with d the angular gap to the
      // spectrum; aim for 1e-16
      const double d = theta_ - op.sector_angle();
      opt_.q = std::max(4, static_cast<int>(std::ceil(16.0 * std::log(10.0) * std::log(2.0) / (2.0 * kPi * d))));
    }
    h_ = std::log(2.0) / opt_.q;
    norm_ = op.norm_bound();
    const auto range = op.spectral_range();
    floor_ = std::max(range.first, 1e-300) / 4.0;
    cutoff_index_ = static_cast<long>(std::ceil(opt_.q * std::log2(opt_.neumann_ratio * norm_)));
    lambda_min_ = range.first;
    low_index_ = lambda_min_ > 1e-200
                     ? static_cast<long>(std::floor(opt_.q * std::log2(lambda_min_ / opt_.neumann_ratio)))
                     : std::numeric_limits<long>::min();
  }

  double angle() const { return theta_; }
  const ContourOptions& options() const { return opt_; }

  ContourPlan plan(const std::vector<Symbol>& symbols) const {
    ContourPlan p;
    const std::size_t K = symbols.size();
    struct Entry {
      std::size_t k;
      Complex value;
    };
    std::map<std::pair<long, int>, std::vector<Entry>> solved;
    std::vector<std::vector<std::pair<Complex, Complex>>> series(K), low(K);  // (zeta, w g)

    for (std::size_t k = 0; k < K; ++k) {
      const Symbol& g = symbols[k];
      for (int ray = -1; ray <= 1; ray += 2) {
        auto significance = [&](long j, Complex& zeta, Complex& wg) {
          const double r = std::exp2(double(j) / opt_.q);
          zeta = std::polar(r, ray < 0 ? -theta_ : theta_);
          const Complex w = (ray < 0 ? 1.0 : -1.0) * h_ * zeta / (2.0 * kPi * kI);
          wg = w * g(zeta);
          return std::abs(wg) / std::max(r, floor_);
        };
        // coarse scan by octaves
        double peak = 0.0;
        std::vector<double> coarse;
        for (int o = opt_.scan_lo; o <= opt_.scan_hi; ++o) {
          Complex z, wg;
          const double s = significance(long(o) * opt_.q, z, wg);
          coarse.push_back(s);
          peak = std::max(peak, s);
        }
        if (peak == 0.0) continue;
        const double tau = opt_.drop_tol * peak;
        int lo = opt_.scan_hi, hi = opt_.scan_lo;
        for (int o = opt_.scan_lo; o <= opt_.scan_hi; ++o) {
          if (coarse[static_cast<std::size_t>(o - opt_.scan_lo)] > tau) {
            lo = std::min(lo, o);
            hi = std::max(hi, o);
          }
        }
        if (lo == opt_.scan_lo || hi == opt_.scan_hi) p.truncated = true;
        lo = std::max(lo - 2, opt_.scan_lo);
        hi = std::min(hi + 2, opt_.scan_hi);
        for (long j = long(lo) * opt_.q; j <= long(hi) * opt_.q; ++j) {
          Complex zeta, wg;
          const double s = significance(j, zeta, wg);
          if (s <= tau) continue;
          if (j >= cutoff_index_) {
            series[k].emplace_back(zeta, wg);
          } else if (j <= low_index_) {
            low[k].emplace_back(zeta, wg);
          } else {
            solved[{j, ray}].push_back({k, wg});
          }
        }
      }
    }

    p.nodes.reserve(solved.size());
    p.weights = CMatrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(solved.size()));
    Eigen::Index col = 0;
    for (const auto& [key, entries] : solved) {
      const double r = std::exp2(double(key.first) / opt_.q);
      p.nodes.push_back(std::polar(r, key.second < 0 ? -theta_ : theta_));
      for (const auto& e : entries) p.weights(static_cast<Eigen::Index>(e.k), col) = e.value;
      ++col;
    }
    p.moments = CMatrix::Zero(static_cast<Eigen::Index>(K), opt_.neumann_terms);
    p.low_moments = CMatrix::Zero(static_cast<Eigen::Index>(K), opt_.neumann_terms);
    for (std::size_t k = 0; k < K; ++k) {
      p.low_nodes += low[k].size();
      for (const auto& [zeta, wg] : low[k]) {
        Complex zp = 1.0;
        for (int i = 0; i < opt_.neumann_terms; ++i) {
          p.low_moments(static_cast<Eigen::Index>(k), i) += wg * zp;
          zp *= zeta;
        }
      }
      p.series_nodes += series[k].size();
      for (const auto& [zeta, wg] : series[k]) {
        Complex zp = 1.0 / zeta;
        for (int i = 0; i < opt_.neumann_terms; ++i) {
          p.moments(static_cast<Eigen::Index>(k), i) += wg * zp;
          zp /= zeta;
        }
      }
    }
    return p;
  }

  /// Y_k = g_k(L) Q V for every symbol.
  std::vector<CMatrix> sweep(const std::vector<Symbol>& symbols, const CMatrix& V) const {
    const ContourPlan p = plan(symbols);
    const CMatrix QV = op_.project_range(V);
    const Eigen::Index n = QV.rows(), m = QV.cols(), nm = n * m;
    const auto K = static_cast<Eigen::Index>(symbols.size());
    CMatrix Y = CMatrix::Zero(nm, K);
    const std::size_t J = p.nodes.size();
    for (std::size_t b0 = 0; b0 < J; b0 += opt_.block) {
      const std::size_t b1 = std::min(J, b0 + opt_.block);
      CMatrix Z(nm, static_cast<Eigen::Index>(b1 - b0));
      parallel_for(b1 - b0, [&](std::size_t b) {
        const CMatrix z = solve(p.nodes[b0 + b], QV);
        Z.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const CVector>(z.data(), nm);
      });
      Y.noalias() += Z * p.weights.middleCols(static_cast<Eigen::Index>(b0),
                                              static_cast<Eigen::Index>(b1 - b0)).transpose();
    }
    if (p.series_nodes > 0) {
      CMatrix powers(nm, opt_.neumann_terms);
      CMatrix cur = QV;
      for (int i = 0; i < opt_.neumann_terms; ++i) {
        powers.col(i) = Eigen::Map<const CVector>(cur.data(), nm);
        cur = op_.matrix() * cur;
      }
      Y.noalias() += powers * p.moments.transpose();
    }
    if (p.low_nodes > 0) {
      CMatrix powers(nm, opt_.neumann_terms);
      CMatrix cur = QV;
      for (int i = 0; i < opt_.neumann_terms; ++i) {
        cur = inverse_on_range(cur);
        powers.col(i) = Eigen::Map<const CVector>(cur.data(), nm);
      }
      Y.noalias() -= powers * p.low_moments.transpose();
    }
    std::vector<CMatrix> out(symbols.size());
    for (Eigen::Index k = 0; k < K; ++k) {
      out[static_cast<std::size_t>(k)] = Eigen::Map<const CMatrix>(Y.col(k).data(), n, m);
    }
    return out;
  }

  /// sum_k g_k(L) Q v_k.
  CMatrix accumulate(const std::vector<Symbol>& symbols, const std::vector<CMatrix>& vs) const {
    if (symbols.size() != vs.size() || vs.empty()) {
      throw InvalidArgument("contour accumulate: symbol/vector count mismatch");
    }
    const ContourPlan p = plan(symbols);
    const Eigen::Index n = vs[0].rows(), m = vs[0].cols(), nm = n * m;
    const auto K = static_cast<Eigen::Index>(symbols.size());
    CMatrix Vt(nm, K);
    for (Eigen::Index k = 0; k < K; ++k) {
      const CMatrix q = op_.project_range(vs[static_cast<std::size_t>(k)]);
      Vt.col(k) = Eigen::Map<const CVector>(q.data(), nm);
    }
    CMatrix out = CMatrix::Zero(n, m);
    const std::size_t J = p.nodes.size();
    for (std::size_t b0 = 0; b0 < J; b0 += opt_.block) {
      const std::size_t b1 = std::min(J, b0 + opt_.block);
      const CMatrix U = Vt * p.weights.middleCols(static_cast<Eigen::Index>(b0),
                                                  static_cast<Eigen::Index>(b1 - b0));
      std::vector<CMatrix> Z(b1 - b0);
      parallel_for(b1 - b0, [&](std::size_t b) {
        const CMatrix rhs = Eigen::Map<const CMatrix>(U.col(static_cast<Eigen::Index>(b)).data(), n, m);
        Z[b] = solve(p.nodes[b0 + b], rhs);
      });
      for (const auto& z : Z) out += z;
    }
    if (p.series_nodes > 0) {
      const CMatrix S = Vt * p.moments;
      CMatrix acc = CMatrix::Zero(n, m);
      for (int i = opt_.neumann_terms - 1; i >= 0; --i) {
        acc = op_.matrix() * acc;
        acc += Eigen::Map<const CMatrix>(S.col(i).data(), n, m);
      }
      out += acc;
    }
    if (p.low_nodes > 0) {
      const CMatrix S = Vt * p.low_moments;
      CMatrix acc = CMatrix::Zero(n, m);
      for (int i = opt_.neumann_terms - 1; i >= 0; --i) {
        acc += Eigen::Map<const CMatrix>(S.col(i).data(), n, m);
        acc = inverse_on_range(acc);
      }
      out -= acc;
    }
    return out;
  }

  CMatrix apply(const Symbol& g, const CMatrix& V) const { return sweep({g}, V)[0]; }

 private:
  // L^{-1} on ran(L): fixed point x = (L + eps)^{-1}(b + eps x), contraction
  // factor about eps / lambda_min.
  CMatrix inverse_on_range(const CMatrix& b) const {
    std::call_once(shifted_once_, [&] {
      const auto n = static_cast<Eigen::Index>(op_.size());
      SparseMatrix a = op_.matrix();
      SparseMatrix id(n, n);
      id.setIdentity();
      a += (1e-3 * lambda_min_) * id;
      shifted_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
      shifted_->compute(a);
      if (shifted_->info() != Eigen::Success) throw NumericalFailure("contour: shifted factorization failed");
    });
    const double eps = 1e-3 * lambda_min_;
    const CMatrix qb = op_.project_range(b);
    CMatrix x = CMatrix::Zero(b.rows(), b.cols());
    // b nearly in the kernel leaves qb at round-off; measure against |b| / lambda_min
    const double floor = b.norm() / lambda_min_;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 40; ++it) {
      const CMatrix next = op_.project_range(CMatrix(shifted_->solve(CMatrix(qb + eps * x))));
      const double change = (next - x).norm();
      x = next;
      const double scale = std::max(x.norm(), 1e-6 * floor);
      // stop once the iteration has reached round-off
      if (change <= 1e-15 * scale || (change > 0.5 * prev && change <= 1e-10 * scale)) return x;
      prev = change;
    }
    throw NumericalFailure("contour: inverse on range did not converge");
  }

  CMatrix solve(Complex zeta, const CMatrix& rhs) const {
    const auto n = static_cast<Eigen::Index>(op_.size());
    SparseMatrix a = -op_.matrix();
    SparseMatrix id(n, n);
    id.setIdentity();
    a += zeta * id;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) {
      throw NumericalFailure("contour: factorization failed at |zeta| = " + std::to_string(std::abs(zeta)));
    }
    return op_.project_range(CMatrix(lu.solve(rhs)));
  }

  const SectorialOperator& op_;
  ContourOptions opt_;
  double theta_ = 0.0;
  double h_ = 0.0;
  double norm_ = 0.0;
  double floor_ = 0.0;
  long cutoff_index_ = 0;
  double lambda_min_ = 0.0;
  long low_index_ = 0;
  mutable std::once_flag shifted_once_;
  mutable std::unique_ptr<Eigen::SparseLU<SparseMatrix>> shifted_;
};

}  // namespace paralab

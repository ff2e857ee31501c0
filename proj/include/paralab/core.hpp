#pragma once
// Shared vocabulary: scalar/vector aliases, error types, deterministic
// parallel loops and seeded random probes.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace paralab {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A configured size or node budget would be exceeded.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A theorem hypothesis on the decay orders is not met; the message names it.
class HypothesisViolated : public Error {
 public:
  using Error::Error;
};

/// Linear solve or quadrature did not reach its tolerance.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// threads

namespace detail {
inline int& thread_setting() {
  static int n = [] {
    if (const char* env = std::getenv("PARALAB_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    return 1;
  }();
  return n;
}
}  // namespace detail

inline int thread_count() { return detail::thread_setting(); }
inline void set_thread_count(int n) { detail::thread_setting() = std::max(1, n); }

/// Runs body(i) for i in [0, n). Every index writes only its own output slot,
/// so results do not depend on the partitioning or the thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// random probes

using Rng = std::mt19937_64;

inline CVector random_gaussian(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = g(rng);
    const double im = g(rng);
    v[i] = Complex(re, im);
  }
  return v;
}

inline CVector random_uniform_real(Eigen::Index n, Rng& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  CVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline double max_abs(const CVector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline double relative_error(const CVector& a, const CVector& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace paralab

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlfp {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A Lévy functional or jump integral failed to converge.
class NonIntegrable : public Error {
public:
  using Error::Error;
};

class TailBoundTooLoose : public Error {
public:
  using Error::Error;
};

class GridTooCoarse : public Error {
public:
  using Error::Error;
};

class EmptyCurve : public Error {
public:
  using Error::Error;
};

/// A particle left the guard ball; `particle` is its index in the ensemble.
class BlowUp : public Error {
public:
  BlowUp(const std::string& what, std::size_t particle) : Error(what), particle_(particle) {}
  std::size_t particle() const noexcept { return particle_; }

private:
  std::size_t particle_;
};

class StepRejected : public Error {
public:
  using Error::Error;
};

class DegenerateEnsemble : public Error {
public:
  using Error::Error;
};

/// Input violates a documented precondition (bad exponent, unsorted grid, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

/// Trace (nuclear) norm of a symmetric matrix: sum of |eigenvalues|.
/// For positive semi-definite `a` this is tr(a), the norm for which
/// tr(a * H) <= |a| * |H|_op holds.
template <int D>
double matrix_norm(const Mat<D>& a) {
  if constexpr (D == 1) {
    return std::abs(a(0, 0));
  } else {
    Eigen::SelfAdjointEigenSolver<Mat<D>> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
  }
}

/// Surface area of the unit sphere S^{D-1}.
constexpr double sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * kPi;
    case 3: return 4.0 * kPi;
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

/// Quintic smoothstep on [0,1]; C^2 at both seams.
inline double smoothstep5(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

inline double smoothstep5_deriv(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double u = s * (1.0 - s);
  return 30.0 * u * u;
}

inline double smoothstep5_deriv2(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{0};
  return n;
}
}  // namespace detail

/// Sets the worker count used by parallel_for; 0 means hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_setting() = n; }

inline unsigned thread_count() {
  unsigned n = detail::thread_setting();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Static block partition of [0, n). Each index is visited exactly once and
/// the body must not depend on which worker runs it.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), std::max<std::size_t>(n, 1)));
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Sum of term(i) over [0, n) in fixed blocks, so the rounding does not
/// depend on the worker count.
template <class Term>
double parallel_sum(std::size_t n, Term&& term, std::size_t block = 4096) {
  const std::size_t blocks = (n + block - 1) / block;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, [&](std::size_t b) {
    double s = 0.0;
    const std::size_t hi = std::min(n, (b + 1) * block);
    for (std::size_t i = b * block; i < hi; ++i) s += term(i);
    partial[b] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace nlfp

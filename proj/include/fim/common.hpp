#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fim {

// ---------------------------------------------------------------------------
// Errors. ValidationError maps to CLI exit code 2, NumericError to 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

/// Lifted history chain is reducible or periodic: no unique stationary law.
struct NonErgodicError : NumericError {
    using NumericError::NumericError;
};

/// Exact enumeration would exceed the configured entry cap.
struct SizeOverflowError : NumericError {
    using NumericError::NumericError;
};

/// theta too close to its domain boundary for the finite-difference step.
struct BoundaryThetaError : ValidationError {
    using ValidationError::ValidationError;
};

struct SingularCovarianceError : NumericError {
    using NumericError::NumericError;
};

struct InvalidVarianceError : NumericError {
    using NumericError::NumericError;
};

struct IndeterminateError : NumericError {
    using NumericError::NumericError;
};

struct NotPositiveDefiniteError : NumericError {
    using NumericError::NumericError;
};

struct TooShortError : ValidationError {
    using ValidationError::ValidationError;
};

struct NoFiniteLikelihoodError : NumericError {
    using NumericError::NumericError;
};

/// |J|/T or |B|/T beyond the exponential range even after weight shifting.
struct OverflowRiskError : NumericError {
    using NumericError::NumericError;
};

// ---------------------------------------------------------------------------
// Compensated summation (Neumaier variant). Deterministic for a fixed
// insertion order regardless of partitioning done by the caller.
// ---------------------------------------------------------------------------

class NeumaierSum {
  public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small dense linear algebra. Everything in this project is d^M x d^M with
// d^M <= a few dozen, so plain Gaussian elimination is appropriate.
// Matrices are row-major with explicit dimension.
// ---------------------------------------------------------------------------

/// Solve A x = b by Gaussian elimination with partial pivoting.
/// A is row-major n x n and is consumed. Throws NumericError when singular.
inline std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    if (a.size() != n * n) throw std::invalid_argument("solve_linear: shape mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        }
        if (std::abs(a[piv * n + col]) < 1e-300) {
            throw NumericError("solve_linear: singular matrix");
        }
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= factor * a[col * n + c];
            b[r] -= factor * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
/// Good enough for the p x p Fisher matrices (p is tiny).
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n) {
    if (a.size() != n * n) throw std::invalid_argument("symmetric_eigenvalues: shape mismatch");
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        if (off < 1e-300) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// ---------------------------------------------------------------------------
// Scalar optimization / root finding.
// ---------------------------------------------------------------------------

/// Golden-section maximization of f on [lo, hi] to |dx| <= tol.
inline double golden_section_maximize(const std::function<double(double)>& f, double lo,
                                      double hi, double tol) {
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

/// Bisection root of f on a bracket with f(lo) * f(hi) < 0, to |dx| <= tol.
inline double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                          double tol) {
    double flo = f(lo);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((flo <= 0.0) == (fm <= 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Dominant eigenpair of a small non-negative matrix.
// Shifted power iteration handles the near-degenerate +/- pair that shows
// up in antiferromagnetic transfer matrices; a few Rayleigh-quotient
// refinement steps then pin the pair down to roundoff.
// ---------------------------------------------------------------------------

struct DominantEigenpair {
    double value = 0.0;
    std::vector<double> vec;
    int iterations = 0;
    double residual = 0.0;
};

namespace detail {

inline void matvec(std::span<const double> a, std::span<const double> x,
                   std::span<double> y) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        NeumaierSum s;
        for (std::size_t j = 0; j < n; ++j) s.add(a[i * n + j] * x[j]);
        y[i] = s.value();
    }
}

inline double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

}  // namespace detail

/// Dominant eigenpair of the non-negative matrix a (row-major n x n).
/// Power iteration on a + shift*I (shift = max row sum), then Rayleigh
/// refinement via bordered solves. tol is the relative change stop.
inline DominantEigenpair dominant_eigenpair(std::span<const double> a, std::size_t n,
                                            double tol = 1e-14,
                                            std::size_t max_iter = 100000) {
    if (a.size() != n * n) throw std::invalid_argument("dominant_eigenpair: shape mismatch");
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < n; ++j) rs += a[i * n + j];
        shift = std::max(shift, rs);
    }
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n))), y(n);
    double lam = 0.0;
    DominantEigenpair out;
    for (std::size_t it = 0; it < max_iter; ++it) {
        detail::matvec(a, x, y);
        for (std::size_t i = 0; i < n; ++i) y[i] += shift * x[i];
        const double nrm = detail::norm2(y);
        if (nrm == 0.0) throw NumericError("dominant_eigenpair: zero iterate");
        for (std::size_t i = 0; i < n; ++i) y[i] /= nrm;
        const double lam_new = nrm - shift;
        out.iterations = static_cast<int>(it) + 1;
        const bool done = std::abs(lam_new - lam) <= tol * std::abs(lam_new);
        lam = lam_new;
        x.swap(y);
        if (done) break;
    }
    // Rayleigh refinement: solve (A - mu I) z = x, renormalize, update mu.
    for (int step = 0; step < 30; ++step) {
        std::vector<double> m(a.begin(), a.end());
        const double mu = lam * (1.0 + 1e-13) + 1e-300;
        for (std::size_t i = 0; i < n; ++i) m[i * n + i] -= mu;
        std::vector<double> z;
        try {
            z = solve_linear(std::move(m), x);
        } catch (const NumericError&) {
            break;  // exactly singular: current pair already converged
        }
        const double nrm = detail::norm2(z);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) break;
        for (auto& v : z) v /= nrm;
        detail::matvec(a, z, y);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += z[i] * y[i];
            den += z[i] * z[i];
        }
        const double lam_new = num / den;
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            delta = std::max(delta, std::abs(std::abs(z[i]) - std::abs(x[i])));
        x = std::move(z);
        const bool done = std::abs(lam_new - lam) <= 1e-15 * std::abs(lam_new) && delta < 1e-13;
        lam = lam_new;
        if (done) break;
    }
    // Perron vector is non-negative; flip sign noise away.
    double sgn = 0.0;
    for (double v : x) sgn += v;
    if (sgn < 0.0)
        for (auto& v : x) v = -v;
    for (auto& v : x) v = std::max(v, 0.0);
    detail::matvec(a, x, y);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(y[i] - lam * x[i]));
    out.residual = res / std::max(1e-300, std::abs(lam));
    out.value = lam;
    out.vec = std::move(x);
    return out;
}

// ---------------------------------------------------------------------------
// Misc small helpers.
// ---------------------------------------------------------------------------

/// Index-parallel loop: fn(i) for i in [0, n), partitioned over `threads`
/// workers. Each index owns its output slot, so results are deterministic
/// regardless of the worker count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// d^n as size_t with overflow guard against the enumeration cap.
inline std::size_t checked_pow(std::size_t base, unsigned exp, std::size_t cap) {
    std::size_t r = 1;
    for (unsigned i = 0; i < exp; ++i) {
        if (r > cap / base) {
            throw SizeOverflowError("window of " + std::to_string(exp) +
                                    " symbols exceeds the enumeration cap");
        }
        r *= base;
    }
    return r;
}

inline constexpr std::size_t kDefaultEnumerationCap = std::size_t{1} << 24;

}  // namespace fim

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace fim {

inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fim

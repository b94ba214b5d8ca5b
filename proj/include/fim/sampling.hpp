#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fim/common.hpp"
#include "fim/process.hpp"

namespace fim {

// ---------------------------------------------------------------------------
// Seeded trajectory generation. The bit-to-double mapping and the normal
// transform are pinned here instead of relying on distribution classes, so
// identical seeds give identical streams on any standard library.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    /// Index into a finite distribution by inverse CDF scan.
    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

template <class T>
struct Trajectory {
    std::string model_id;
    std::vector<double> theta;
    std::uint64_t seed = 0;
    std::vector<T> values;
};

using SymbolTrajectory = Trajectory<int>;
using RealTrajectory = Trajectory<double>;

/// Stationary start: the first M symbols are one draw from pi, then the
/// conditional table drives the chain.
inline SymbolTrajectory sample_finite(const FiniteMarkovModel& model, long long length,
                                      std::uint64_t seed) {
    if (length < 1) throw ValidationError("trajectory length must be positive");
    const auto pi = stationary_distribution(model);
    const int d = model.alphabet().size;
    const int m = model.order();

    SymbolTrajectory traj;
    traj.model_id = model.id();
    traj.theta.assign(model.theta().begin(), model.theta().end());
    traj.seed = seed;
    traj.values.reserve(static_cast<std::size_t>(length));

    Rng rng(seed);
    std::size_t history = 0;
    if (m > 0) {
        history = static_cast<std::size_t>(rng.categorical(pi.probs));
        std::size_t rem = history;
        std::vector<int> first(static_cast<std::size_t>(m));
        for (int i = m - 1; i >= 0; --i) {
            first[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(d));
            rem /= static_cast<std::size_t>(d);
        }
        for (int i = 0; i < m && static_cast<long long>(traj.values.size()) < length; ++i)
            traj.values.push_back(first[static_cast<std::size_t>(i)]);
    }
    std::vector<double> row(static_cast<std::size_t>(d));
    while (static_cast<long long>(traj.values.size()) < length) {
        for (int x = 0; x < d; ++x) row[static_cast<std::size_t>(x)] =
            model.conditional(history, x);
        const int x = rng.categorical(row);
        traj.values.push_back(x);
        history = detail::lifted_successor(history, x, d, m);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// The Gaussian chain with nearest-neighbour correlation rho.
// ---------------------------------------------------------------------------

struct GaussianMarkovModel {
    double mu = 0.0;
    double gamma0 = 1.0;
    double rho = 0.0;

    GaussianMarkovModel(double mu_, double gamma0_, double rho_)
        : mu(mu_), gamma0(gamma0_), rho(rho_) {
        if (!(gamma0 > 0.0)) throw ValidationError("gamma0 must be positive");
        if (rho < -1.0 || rho > 1.0) throw ValidationError("rho must lie in [-1, 1]");
    }

    /// Lag-k covariance gamma0 rho^k.
    double covariance(int k) const { return gamma0 * std::pow(rho, k); }

    std::string id() const {
        return "gaussian-markov(rho=" + std::to_string(rho) + ")";
    }
};

/// X_1 ~ N(mu, gamma0); X_{k+1} ~ N(mu + rho (X_k - mu), gamma0 (1 - rho^2)).
inline RealTrajectory sample_gaussian(const GaussianMarkovModel& model, long long length,
                                      std::uint64_t seed) {
    if (length < 1) throw ValidationError("trajectory length must be positive");
    RealTrajectory traj;
    traj.model_id = model.id();
    traj.theta = {model.mu};
    traj.seed = seed;
    traj.values.reserve(static_cast<std::size_t>(length));
    Rng rng(seed);
    const double cond_sd = std::sqrt(model.gamma0 * (1.0 - model.rho * model.rho));
    double x = model.mu + std::sqrt(model.gamma0) * rng.normal();
    traj.values.push_back(x);
    for (long long i = 1; i < length; ++i) {
        x = model.mu + model.rho * (x - model.mu) + cond_sd * rng.normal();
        traj.values.push_back(x);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Conditional-independence checks for trivariate Gaussians: the coefficient
// of X1 in E[X3 | X2, X1] distinguishes memory-1 chains from look-alikes.
// ---------------------------------------------------------------------------

namespace detail {

/// Leading-minor positive-definiteness of a 3x3 symmetric matrix.
inline bool positive_definite_3x3(const double c[3][3]) {
    const double m1 = c[0][0];
    const double m2 = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    const double m3 = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) -
                      c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0]) +
                      c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
    return m1 > 0.0 && m2 > 0.0 && m3 > 0.0;
}

/// Coefficient of X1 in the conditional mean E[X3 | X2, X1]:
/// (cov(X3, [X1 X2]) Sigma_{12}^{-1})_1.
inline double conditional_x1_coefficient(const double c[3][3]) {
    std::vector<double> sigma{c[0][0], c[0][1], c[1][0], c[1][1]};
    const auto coef = solve_linear(sigma, {c[2][0], c[2][1]});
    return coef[0];
}

}  // namespace detail

/// Dependence of E[X3 | X2, X1] on X1 for the tridiagonal-covariance
/// Gaussian (off-diagonal rho gamma0, zero beyond lag 1). A nonzero
/// coefficient shows this process does not have Markov order 1.
inline double tridiagonal_gaussian_conditional_check(double rho, double gamma0) {
    if (!(gamma0 > 0.0)) throw ValidationError("gamma0 must be positive");
    const double c[3][3] = {{gamma0, rho * gamma0, 0.0},
                            {rho * gamma0, gamma0, rho * gamma0},
                            {0.0, rho * gamma0, gamma0}};
    if (!detail::positive_definite_3x3(c))
        throw NotPositiveDefiniteError(
            "tridiagonal covariance requires |rho| < 1/sqrt(2)");
    return detail::conditional_x1_coefficient(c);
}

/// Same check for the rho^|i-j| covariance of the genuine Markov chain;
/// the coefficient vanishes identically.
inline double markov_gaussian_conditional_check(double rho, double gamma0) {
    if (!(gamma0 > 0.0)) throw ValidationError("gamma0 must be positive");
    if (std::abs(rho) >= 1.0) throw ValidationError("|rho| must be below 1");
    const double c[3][3] = {{gamma0, rho * gamma0, rho * rho * gamma0},
                            {rho * gamma0, gamma0, rho * gamma0},
                            {rho * rho * gamma0, rho * gamma0, gamma0}};
    if (!detail::positive_definite_3x3(c))
        throw NotPositiveDefiniteError("covariance is not positive definite");
    return detail::conditional_x1_coefficient(c);
}

}  // namespace fim

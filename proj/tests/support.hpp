#pragma once

// Shared fixtures and independent oracles for the test suites. Everything in
// here recomputes expectations from first principles (closed forms, direct
// enumeration, quadrature) without touching the library code paths under test.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "fim/models.hpp"
#include "fim/process.hpp"

namespace testsupport {

// Closed-form stationary distribution of a two-state chain with transition
// kernel Q(x|y): pi0 = Q(0|1) / (Q(0|1) + Q(1|0)).
inline std::pair<double, double> two_state_stationary(double q01, double q10) {
    const double pi0 = q01 / (q01 + q10);
    return {pi0, 1.0 - pi0};
}

// Brute-force joint window probabilities of a binary order-1 chain, built
// directly from a caller-supplied kernel (independent of fim::window_distribution).
inline std::map<std::vector<int>, double> enumerate_windows_order1(
    const std::function<double(int, int)>& q, double pi0, int n) {
    std::map<std::vector<int>, double> probs;
    const int total = 1 << n;
    for (int bits = 0; bits < total; ++bits) {
        std::vector<int> cfg(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) cfg[static_cast<std::size_t>(i)] = (bits >> (n - 1 - i)) & 1;
        double p = cfg[0] == 0 ? pi0 : 1.0 - pi0;
        for (int i = 1; i < n; ++i) p *= q(cfg[static_cast<std::size_t>(i)],
                                           cfg[static_cast<std::size_t>(i) - 1]);
        probs[cfg] = p;
    }
    return probs;
}

// Scalar Fisher information of a distribution family p(theta) -> vector of
// probabilities, by a fourth-order central difference on log p. Used as the
// independent route against the library's analytic scores.
inline double fisher_by_difference(const std::function<std::vector<double>(double)>& dist,
                                   double theta, double h = 1e-5) {
    const auto p0 = dist(theta);
    const auto pp = dist(theta + h);
    const auto pm = dist(theta - h);
    const auto pp2 = dist(theta + 0.5 * h);
    const auto pm2 = dist(theta - 0.5 * h);
    double f = 0.0;
    for (std::size_t i = 0; i < p0.size(); ++i) {
        if (p0[i] <= 0.0) continue;
        const double d1 = (std::log(pp[i]) - std::log(pm[i])) / (2.0 * h);
        const double d2 = (std::log(pp2[i]) - std::log(pm2[i])) / h;
        const double g = (4.0 * d2 - d1) / 3.0;
        f += p0[i] * g * g;
    }
    return f;
}

// A two-parameter binary order-1 test family: staying probability theta0 in
// state 0 and theta1 in state 1. Exercises genuine matrix-valued Fisher
// information in the multi-parameter invariants.
inline fim::FiniteMarkovModel make_two_param_chain(double theta0, double theta1) {
    return fim::FiniteMarkovModel(
        "two-param-chain", fim::Alphabet(2), 1, {theta0, theta1},
        {{0.0, 1.0}, {0.0, 1.0}},
        [](std::span<const double> th) {
            return std::vector<double>{th[0], 1.0 - th[0], 1.0 - th[1], th[1]};
        },
        [](std::span<const double>, int i) {
            if (i == 0) return std::vector<double>{1.0, -1.0, 0.0, 0.0};
            return std::vector<double>{0.0, 0.0, -1.0, 1.0};
        });
}

// theta-independent table model (zero Fisher information by construction).
inline fim::FiniteMarkovModel make_frozen_chain() {
    return fim::FiniteMarkovModel(
        "frozen-chain", fim::Alphabet(2), 1, {0.5}, {{0.0, 1.0}},
        [](std::span<const double>) {
            return std::vector<double>{0.7, 0.3, 0.4, 0.6};
        },
        [](std::span<const double>, int) {
            return std::vector<double>{0.0, 0.0, 0.0, 0.0};
        });
}

}  // namespace testsupport

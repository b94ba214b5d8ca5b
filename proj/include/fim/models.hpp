#pragma once

#include <cmath>
#include <string>

#include "fim/process.hpp"

namespace fim {

// Builtin model families. All are binary, scalar-theta with theta in [0, 1],
// and carry analytic conditional-derivative tables.

/// Independent Bernoulli symbols, P(1) = theta. Markov order 0.
inline FiniteMarkovModel make_iid_bernoulli(double theta) {
    return FiniteMarkovModel(
        "iid-bernoulli", Alphabet(2), 0, {theta}, {{0.0, 1.0}},
        [](std::span<const double> th) {
            return std::vector<double>{1.0 - th[0], th[0]};
        },
        [](std::span<const double>, int) {
            return std::vector<double>{-1.0, 1.0};
        });
}

/// Two-state chain whose Fisher information is sub-additive (f < F1):
/// staying probabilities theta (state 0) and e^{-theta/3} (state 1).
inline FiniteMarkovModel make_toy_sub(double theta) {
    return FiniteMarkovModel(
        "toy-sub", Alphabet(2), 1, {theta}, {{0.0, 1.0}},
        [](std::span<const double> th) {
            const double e = std::exp(-th[0] / 3.0);
            // rows: history; columns: next symbol
            return std::vector<double>{th[0], 1.0 - th[0], 1.0 - e, e};
        },
        [](std::span<const double> th, int) {
            const double de = std::exp(-th[0] / 3.0) / 3.0;
            return std::vector<double>{1.0, -1.0, de, -de};
        });
}

/// Two-state chain whose Fisher information is super-additive (f > F1):
/// staying probabilities theta (state 0) and sqrt(theta) (state 1).
inline FiniteMarkovModel make_toy_super(double theta) {
    return FiniteMarkovModel(
        "toy-super", Alphabet(2), 1, {theta}, {{0.0, 1.0}},
        [](std::span<const double> th) {
            const double r = std::sqrt(th[0]);
            return std::vector<double>{th[0], 1.0 - th[0], 1.0 - r, r};
        },
        [](std::span<const double> th, int) {
            const double dr = 0.5 / std::sqrt(th[0]);
            return std::vector<double>{1.0, -1.0, -dr, dr};
        });
}

inline FiniteMarkovModel make_builtin(const std::string& name, double theta) {
    if (name == "iid-bernoulli") return make_iid_bernoulli(theta);
    if (name == "toy-sub") return make_toy_sub(theta);
    if (name == "toy-super") return make_toy_super(theta);
    throw ValidationError("unknown builtin model: " + name);
}

}  // namespace fim

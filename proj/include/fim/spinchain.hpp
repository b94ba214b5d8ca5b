#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fim/common.hpp"
#include "fim/fisher.hpp"
#include "fim/process.hpp"

namespace fim {

// ---------------------------------------------------------------------------
// Transfer-matrix thermodynamics of 1-D Ising chains with range-R couplings:
// exact thermodynamic-limit marginals, thermal Fisher information, heat
// capacity, the xi and delta-F diagnostics, zero-derivative curve detection
// and Markov-order measurement.
//
// Spin convention: symbol 0 = up (+1), symbol 1 = down (-1). Multi-indices
// over R spins are base-2 with the first spin most significant.
// ---------------------------------------------------------------------------

inline double spin_of(int symbol) { return 1.0 - 2.0 * static_cast<double>(symbol); }

struct SpinChainModel {
    double B = 0.0;              // field, energy units
    std::vector<double> J;       // couplings J_1..J_R, trailing zeros trimmed
    double T = 1.0;              // temperature, k_B = 1

    SpinChainModel(double field, std::vector<double> couplings, double temperature)
        : B(field), J(std::move(couplings)), T(temperature) {
        if (!(T > 0.0)) throw ValidationError("temperature must be positive");
        while (J.size() > 1 && J.back() == 0.0) J.pop_back();
        if (J.empty()) J.push_back(0.0);  // independent spins, handled as R = 1
    }

    int range() const { return static_cast<int>(J.size()); }
    double alpha() const { return J.size() >= 2 && J[0] != 0.0 ? J[1] / J[0] : 0.0; }
};

/// Row-to-column transfer step appending one spin. Entries are stored with
/// the largest Boltzmann exponent shifted out; marginals are ratios in which
/// the shift cancels, and log_lambda() restores the absolute scale.
struct TransferMatrix {
    int range = 1;
    int dim = 2;
    std::vector<double> weights;         // shifted entries exp(e_ij / T - shift)
    std::vector<double> energy;          // e_ij (zero where no transition)
    std::vector<bool> allowed;           // suffix/prefix compatibility mask
    double shift = 0.0;                  // max_ij e_ij / T
    double temperature = 1.0;
    double lambda_shifted = 0.0;         // dominant eigenvalue of the shifted matrix
    std::vector<double> u_left, u_right; // dominant pair, u_left . u_right = 1
    double spectral_gap = 0.0;           // 1 - |lambda_2| / lambda_1 (estimate)

    double log_lambda() const { return std::log(lambda_shifted) + shift; }
    /// Unshifted entry; may overflow for extreme B/T, J/T.
    double entry(int i, int j) const {
        return std::exp(energy[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                                static_cast<std::size_t>(j)] /
                        temperature) *
               (allowed[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                        static_cast<std::size_t>(j)]
                    ? 1.0
                    : 0.0);
    }
    /// Unshifted dominant eigenvalue; may overflow for extreme parameters.
    double lambda() const { return std::exp(log_lambda()); }
};

namespace spindetail {

/// Energy gained by appending spin `snew` after window eta (R spins):
/// field of the new spin plus every coupling it closes.
inline double append_energy(const SpinChainModel& model, std::size_t eta, int snew) {
    const int r = model.range();
    double e = model.B * spin_of(snew);
    for (int k = 1; k <= r; ++k) {
        // spin at distance k before snew: position r - k inside eta
        const int sym = static_cast<int>((eta >> (k - 1)) & 1u);
        e += model.J[static_cast<std::size_t>(k) - 1] * spin_of(sym) * spin_of(snew);
    }
    return e;
}

}  // namespace spindetail

inline TransferMatrix build_transfer_matrix(const SpinChainModel& model) {
    if (std::abs(model.B) / model.T > 700.0)
        throw OverflowRiskError("|B|/T exceeds the exponential range");
    for (double j : model.J)
        if (std::abs(j) / model.T > 700.0)
            throw OverflowRiskError("|J|/T exceeds the exponential range");

    TransferMatrix tm;
    tm.range = model.range();
    tm.dim = 1 << model.range();
    tm.temperature = model.T;
    const std::size_t n = static_cast<std::size_t>(tm.dim);
    tm.weights.assign(n * n, 0.0);
    tm.energy.assign(n * n, 0.0);
    tm.allowed.assign(n * n, false);

    if (tm.range == 1) {
        // symmetric convention: field split between the two spins
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                tm.energy[static_cast<std::size_t>(i) * 2 + static_cast<std::size_t>(j)] =
                    model.J[0] * spin_of(i) * spin_of(j) +
                    0.5 * model.B * (spin_of(i) + spin_of(j));
                tm.allowed[static_cast<std::size_t>(i) * 2 + static_cast<std::size_t>(j)] = true;
            }
        }
    } else {
        // sliding multi-index: eta -> eta' allowed iff the length-(R-1)
        // suffix of eta equals the prefix of eta'; the entry carries the
        // appended spin's field and all couplings it closes.
        const std::size_t mask = n / 2;
        for (std::size_t eta = 0; eta < n; ++eta) {
            const std::size_t suffix = eta & (mask - 1);
            for (int snew = 0; snew < 2; ++snew) {
                const std::size_t eta2 = (suffix << 1) | static_cast<std::size_t>(snew);
                tm.energy[eta * n + eta2] = spindetail::append_energy(model, eta, snew);
                tm.allowed[eta * n + eta2] = true;
            }
        }
    }

    double emax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n * n; ++i)
        if (tm.allowed[i]) emax = std::max(emax, tm.energy[i]);
    tm.shift = emax / model.T;
    for (std::size_t i = 0; i < n * n; ++i)
        if (tm.allowed[i]) tm.weights[i] = std::exp(tm.energy[i] / model.T - tm.shift);

    if (tm.range == 1) {
        // closed-form symmetric 2x2 eigensolve; robust at near-degeneracy
        const double a = tm.weights[0], c = tm.weights[1], b = tm.weights[3];
        const double half_diff = 0.5 * (a - b);
        const double root = std::hypot(half_diff, c);
        tm.lambda_shifted = 0.5 * (a + b) + root;
        double ux, uy;
        if (c == 0.0) {
            ux = a >= b ? 1.0 : 0.0;
            uy = a >= b ? 0.0 : 1.0;
        } else if (half_diff >= 0.0) {
            ux = half_diff + root;
            uy = c;
        } else {
            ux = c;
            uy = root - half_diff;
        }
        const double nrm = std::hypot(ux, uy);
        tm.u_right = {ux / nrm, uy / nrm};
        tm.u_left = tm.u_right;  // symmetric: u.u = 1
        const double lambda2 = 0.5 * (a + b) - root;
        tm.spectral_gap = 1.0 - std::abs(lambda2) / tm.lambda_shifted;
    } else {
        const auto right = dominant_eigenpair(tm.weights, n);
        std::vector<double> wt(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) wt[j * n + i] = tm.weights[i * n + j];
        const auto left = dominant_eigenpair(wt, n);
        tm.lambda_shifted = 0.5 * (right.value + left.value);
        tm.u_right = right.vec;
        tm.u_left = left.vec;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += tm.u_left[i] * tm.u_right[i];
        if (!(dot > 0.0)) throw NumericError("transfer matrix: dominant pair not resolved");
        for (auto& v : tm.u_left) v /= dot;
        // deflated power iteration for a coarse subdominant magnitude
        std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n))), y(n);
        double l2 = 0.0;
        for (int it = 0; it < 500; ++it) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += tm.u_left[i] * x[i];
            for (std::size_t i = 0; i < n; ++i) x[i] -= proj * tm.u_right[i];
            detail::matvec(tm.weights, x, y);
            l2 = detail::norm2(y);
            if (l2 == 0.0) break;
            for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / l2;
        }
        tm.spectral_gap = 1.0 - l2 / tm.lambda_shifted;
    }
    return tm;
}

// ---------------------------------------------------------------------------
// Thermodynamic-limit marginals.
// ---------------------------------------------------------------------------

namespace spindetail {

inline std::size_t window_index(std::span<const int> cfg, int from, int r) {
    std::size_t idx = 0;
    for (int i = 0; i < r; ++i)
        idx = (idx << 1) | static_cast<std::size_t>(cfg[static_cast<std::size_t>(from + i)]);
    return idx;
}

}  // namespace spindetail

/// Exact m-spin marginal in the thermodynamic limit.
inline WindowDistribution marginal(const SpinChainModel& model, int m) {
    if (m < 1) throw ValidationError("marginal length must be positive");
    const auto tm = build_transfer_matrix(model);
    const int r = tm.range;
    const std::size_t n = static_cast<std::size_t>(tm.dim);

    // stationary distribution over R-spin windows
    WindowDistribution win;
    win.alphabet_size = 2;
    win.length = r;
    win.probs.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) win.probs[i] = tm.u_left[i] * tm.u_right[i];

    if (m <= r) {
        while (win.length > m) win = win.marginalize_last();
        return win;
    }

    WindowDistribution out;
    out.alphabet_size = 2;
    out.length = m;
    out.probs.assign(std::size_t{1} << m, 0.0);
    std::vector<int> cfg(static_cast<std::size_t>(m));
    for (std::size_t code = 0; code < out.probs.size(); ++code) {
        for (int i = 0; i < m; ++i)
            cfg[static_cast<std::size_t>(i)] = static_cast<int>((code >> (m - 1 - i)) & 1u);
        const std::size_t first = spindetail::window_index(cfg, 0, r);
        const std::size_t last = spindetail::window_index(cfg, m - r, r);
        double p = tm.u_left[first] * tm.u_right[last];
        for (int j = 0; j + r < m; ++j) {
            const std::size_t e1 = spindetail::window_index(cfg, j, r);
            const std::size_t e2 = spindetail::window_index(cfg, j + 1, r);
            p *= tm.weights[e1 * n + e2] / tm.lambda_shifted;
        }
        out.probs[code] = p;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analytic eigen-derivatives. V entries depend on the differentiation
// variable only through exp(e * beta) (beta route) or exp(e / T) (T route),
// so V' and V'' are exact Hadamard products and the dominant-pair
// derivatives follow from bordered perturbation solves.
// ---------------------------------------------------------------------------

namespace spindetail {

struct EigenDerivatives {
    double dlambda_over_lambda = 0.0;
    double d2lambda_over_lambda = 0.0;  // lambda'' / lambda
    std::vector<double> du_left;        // d u_L
    std::vector<double> du_right;       // d u_R
};

/// Solve (A - lambda I) x = rhs with gauge g . x = 0 via the bordered system
/// [[A - lambda I, b], [g^T, 0]]; b must have a component along the null
/// direction (the dominant eigenvector works).
inline std::vector<double> singular_solve(std::span<const double> a, double lambda,
                                          std::span<const double> rhs,
                                          std::span<const double> gauge,
                                          std::span<const double> border) {
    const std::size_t n = rhs.size();
    const std::size_t nb = n + 1;
    std::vector<double> big(nb * nb, 0.0), brhs(nb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) big[i * nb + j] = a[i * n + j];
        big[i * nb + i] -= lambda;
        big[i * nb + n] = border[i];
        big[n * nb + i] = gauge[i];
        brhs[i] = rhs[i];
    }
    auto sol = solve_linear(std::move(big), std::move(brhs));
    sol.resize(n);
    return sol;
}

/// First (and optionally second) derivatives of the dominant pair of the
/// shifted transfer matrix, for entrywise rates de[i] = d log V_i.
/// dde is the second log-derivative contribution: V'' = V o (de^2 + dde).
inline EigenDerivatives eigen_derivatives(const TransferMatrix& tm,
                                          std::span<const double> de,
                                          std::span<const double> dde, bool second_order) {
    const std::size_t n = static_cast<std::size_t>(tm.dim);
    std::vector<double> dv(n * n, 0.0);
    for (std::size_t i = 0; i < n * n; ++i) dv[i] = tm.weights[i] * de[i];

    EigenDerivatives out;
    // lambda' = u_L . V' u_R  (normalized u_L . u_R = 1)
    std::vector<double> tmp(n);
    detail::matvec(dv, tm.u_right, tmp);
    double dlambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) dlambda += tm.u_left[i] * tmp[i];
    out.dlambda_over_lambda = dlambda / tm.lambda_shifted;

    // u_R' : (V - lambda) u_R' = lambda' u_R - V' u_R, gauge u_L . u_R' = 0
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = dlambda * tm.u_right[i] - tmp[i];
    out.du_right = singular_solve(tm.weights, tm.lambda_shifted, rhs, tm.u_left, tm.u_right);

    // u_L' : transposed system, gauge u_R . u_L' = 0
    std::vector<double> wt(n * n), dvt(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            wt[j * n + i] = tm.weights[i * n + j];
            dvt[j * n + i] = dv[i * n + j];
        }
    }
    std::vector<double> tmpl(n);
    detail::matvec(dvt, tm.u_left, tmpl);
    std::vector<double> rhsl(n);
    for (std::size_t i = 0; i < n; ++i) rhsl[i] = dlambda * tm.u_left[i] - tmpl[i];
    out.du_left = singular_solve(wt, tm.lambda_shifted, rhsl, tm.u_right, tm.u_left);

    if (second_order) {
        // lambda'' = u_L V'' u_R + 2 u_L V' u_R'  (with the gauge above)
        std::vector<double> d2v(n * n, 0.0);
        for (std::size_t i = 0; i < n * n; ++i)
            d2v[i] = tm.weights[i] * (de[i] * de[i] + dde[i]);
        detail::matvec(d2v, tm.u_right, tmp);
        double term1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) term1 += tm.u_left[i] * tmp[i];
        detail::matvec(dv, out.du_right, tmp);
        double term2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) term2 += tm.u_left[i] * tmp[i];
        out.d2lambda_over_lambda = (term1 + 2.0 * term2) / tm.lambda_shifted;
    }
    return out;
}

/// Entrywise d log V / dT at fixed shift: e_ij / T depends on T as 1/T.
inline std::vector<double> dlogV_dT(const TransferMatrix& tm) {
    const std::size_t n = static_cast<std::size_t>(tm.dim);
    std::vector<double> de(n * n, 0.0);
    for (std::size_t i = 0; i < n * n; ++i)
        if (tm.allowed[i]) de[i] = -tm.energy[i] / (tm.temperature * tm.temperature);
    return de;
}

}  // namespace spindetail

// ---------------------------------------------------------------------------
// Thermal Fisher information of m-spin marginals.
// ---------------------------------------------------------------------------

/// Default scheme for temperature derivatives: central differences with
/// h_T = 1e-4 T, Richardson extrapolated.
inline DerivativeScheme default_thermal_scheme() {
    return DerivativeScheme::central(1e-4, true);
}

namespace spindetail {

/// d log P(cfg) / dT for every configuration of the m-spin marginal,
/// assembled from the analytic eigen-pair derivatives.
inline std::vector<double> marginal_score_analytic(const SpinChainModel& model, int m,
                                                   const WindowDistribution& win) {
    const auto tm = build_transfer_matrix(model);
    const std::size_t n = static_cast<std::size_t>(tm.dim);
    const auto de = dlogV_dT(tm);
    const auto eig = eigen_derivatives(tm, de, {}, false);
    const int r = tm.range;

    if (m <= r) {
        // mu = u_L o u_R marginalized down to m spins: carry d mu alongside
        std::vector<double> mu(n), dmu(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu[i] = tm.u_left[i] * tm.u_right[i];
            dmu[i] = eig.du_left[i] * tm.u_right[i] + tm.u_left[i] * eig.du_right[i];
        }
        int len = r;
        while (len > m) {
            const std::size_t half = mu.size() / 2;
            std::vector<double> mu2(half, 0.0), dmu2(half, 0.0);
            for (std::size_t i = 0; i < half; ++i) {
                mu2[i] = mu[2 * i] + mu[2 * i + 1];
                dmu2[i] = dmu[2 * i] + dmu[2 * i + 1];
            }
            mu = std::move(mu2);
            dmu = std::move(dmu2);
            --len;
        }
        std::vector<double> score(mu.size(), 0.0);
        for (std::size_t i = 0; i < mu.size(); ++i)
            if (win.probs[i] > 0.0) score[i] = dmu[i] / mu[i];
        return score;
    }

    std::vector<double> score(win.probs.size(), 0.0);
    std::vector<int> cfg(static_cast<std::size_t>(m));
    for (std::size_t code = 0; code < win.probs.size(); ++code) {
        if (win.probs[code] <= 0.0) continue;
        for (int i = 0; i < m; ++i)
            cfg[static_cast<std::size_t>(i)] = static_cast<int>((code >> (m - 1 - i)) & 1u);
        const std::size_t first = window_index(cfg, 0, r);
        const std::size_t last = window_index(cfg, m - r, r);
        double g = eig.du_left[first] / tm.u_left[first] +
                   eig.du_right[last] / tm.u_right[last] -
                   static_cast<double>(m - r) * eig.dlambda_over_lambda;
        for (int j = 0; j + r < m; ++j) {
            const std::size_t e1 = window_index(cfg, j, r);
            const std::size_t e2 = window_index(cfg, j + 1, r);
            g += de[e1 * n + e2];
        }
        score[code] = g;
    }
    return score;
}

inline std::vector<double> marginal_score_central(const SpinChainModel& model, int m,
                                                  const WindowDistribution& win,
                                                  const DerivativeScheme& scheme) {
    auto diff = [&](double h) {
        SpinChainModel up(model.B, model.J, model.T + h);
        SpinChainModel dn(model.B, model.J, model.T - h);
        const auto wp = marginal(up, m);
        const auto wm = marginal(dn, m);
        std::vector<double> g(win.probs.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (win.probs[i] > 0.0 && wp.probs[i] > 0.0 && wm.probs[i] > 0.0)
                g[i] = (std::log(wp.probs[i]) - std::log(wm.probs[i])) / (2.0 * h);
        }
        return g;
    };
    const double h = scheme.step * model.T;
    auto g = diff(h);
    if (scheme.richardson) {
        const auto g2 = diff(0.5 * h);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = (4.0 * g2[i] - g[i]) / 3.0;
    }
    return g;
}

}  // namespace spindetail

/// Scalar Fisher information of the m-spin marginal with respect to T.
inline double thermal_fisher(const SpinChainModel& model, int m,
                             const DerivativeScheme& scheme = default_thermal_scheme()) {
    if (m < 1 || m > 20) throw ValidationError("marginal length out of range");
    const auto win = marginal(model, m);
    const auto score = (scheme.mode == DerivativeScheme::Mode::Analytic)
                           ? spindetail::marginal_score_analytic(model, m, win)
                           : spindetail::marginal_score_central(model, m, win, scheme);
    NeumaierSum s;
    for (std::size_t i = 0; i < win.probs.size(); ++i) {
        if (win.probs[i] < 1e-300) continue;
        s.add(win.probs[i] * score[i] * score[i]);
    }
    return s.value();
}

// ---------------------------------------------------------------------------
// Specific heat from the dominant eigenvalue.
// ---------------------------------------------------------------------------

struct SpecificHeat {
    double c = 0.0;
    double c_over_T2 = 0.0;
};

/// Per-site heat capacity c = du/dT with u = -d ln lambda / d beta.
inline SpecificHeat specific_heat(const SpinChainModel& model,
                                  const DerivativeScheme& scheme = default_thermal_scheme()) {
    SpecificHeat out;
    if (scheme.mode == DerivativeScheme::Mode::Analytic) {
        const auto tm = build_transfer_matrix(model);
        const std::size_t n = static_cast<std::size_t>(tm.dim);
        // beta route: V = exp(e beta - shift), d log V / d beta = e, second
        // log-derivative contribution is zero
        std::vector<double> de(n * n, 0.0), dde(n * n, 0.0);
        for (std::size_t i = 0; i < n * n; ++i)
            if (tm.allowed[i]) de[i] = tm.energy[i];
        const auto eig = spindetail::eigen_derivatives(tm, de, dde, true);
        const double lp = eig.dlambda_over_lambda;       // (d lambda/d beta)/lambda
        const double lpp = eig.d2lambda_over_lambda;     // (d2 lambda/d beta2)/lambda
        const double beta = 1.0 / model.T;
        out.c = beta * beta * (lpp - lp * lp);           // c = beta^2 d2(ln lambda)/dbeta2
        out.c_over_T2 = out.c / (model.T * model.T);
        return out;
    }
    // numeric route: u(beta) by central difference of ln lambda, then dT
    auto log_lambda_at_beta = [&](double beta) {
        return build_transfer_matrix(SpinChainModel(model.B, model.J, 1.0 / beta))
            .log_lambda();
    };
    auto u_at_T = [&](double temp) {
        const double beta = 1.0 / temp;
        auto d = [&](double h) {
            return -(log_lambda_at_beta(beta + h) - log_lambda_at_beta(beta - h)) /
                   (2.0 * h);
        };
        const double h = scheme.step * beta;
        double v = d(h);
        if (scheme.richardson) v = (4.0 * d(0.5 * h) - v) / 3.0;
        return v;
    };
    auto c_diff = [&](double h) {
        return (u_at_T(model.T + h) - u_at_T(model.T - h)) / (2.0 * h);
    };
    const double h = scheme.step * model.T;
    out.c = c_diff(h);
    if (scheme.richardson) out.c = (4.0 * c_diff(0.5 * h) - out.c) / 3.0;
    out.c_over_T2 = out.c / (model.T * model.T);
    return out;
}

// ---------------------------------------------------------------------------
// Thermometry report and grid scans.
// ---------------------------------------------------------------------------

struct ThermometryReport {
    double T = 0.0;
    double B = 0.0;
    std::vector<double> J;
    double alpha = 0.0;
    double F1 = 0.0;
    double F12 = 0.0;
    double rate = 0.0;     // f: F_{1:R+1} - F_{1:R}
    double xi = 0.0;
    bool xi_diverged = false;
    double delta_F = 0.0;  // F12 - 2 F1
    double c = 0.0;
    double c_over_T2 = 0.0;
};

inline ThermometryReport thermometry_report(
    const SpinChainModel& model, const DerivativeScheme& scheme = default_thermal_scheme()) {
    ThermometryReport rep;
    rep.T = model.T;
    rep.B = model.B;
    rep.J = model.J;
    rep.alpha = model.alpha();
    rep.F1 = thermal_fisher(model, 1, scheme);
    rep.F12 = thermal_fisher(model, 2, scheme);
    const int r = model.range();
    const double f_long = (r == 1) ? rep.F12 : thermal_fisher(model, r + 1, scheme);
    const double f_short = (r == 1) ? rep.F1 : thermal_fisher(model, r, scheme);
    rep.rate = f_long - f_short;
    rep.delta_F = rep.F12 - 2.0 * rep.F1;
    try {
        const auto xi = xi_ratio(std::max(0.0, rep.F12), std::max(0.0, rep.F1));
        rep.xi = xi.value;
        rep.xi_diverged = xi.diverged;
    } catch (const IndeterminateError&) {
        rep.xi = std::numeric_limits<double>::quiet_NaN();
        rep.xi_diverged = false;
    }
    const auto sh = specific_heat(model, scheme);
    rep.c = sh.c;
    rep.c_over_T2 = sh.c_over_T2;
    return rep;
}

struct ScanRow {
    ThermometryReport report;
    std::string flags;  // "", "xi_diverged", "overflow_skipped"
};

/// One report per model, in input order. xi values above 1e10 are flagged
/// as diverged; points whose Boltzmann exponents overflow are skipped with
/// a flag instead of aborting the scan.
inline std::vector<ScanRow> scan_maps(std::span<const SpinChainModel> models,
                                      const DerivativeScheme& scheme = default_thermal_scheme(),
                                      int threads = 1) {
    std::vector<ScanRow> rows(models.size());
    parallel_for(models.size(), threads, [&](std::size_t i) {
        try {
            rows[i].report = thermometry_report(models[i], scheme);
            if (rows[i].report.xi_diverged || rows[i].report.xi > 1e10) {
                rows[i].report.xi_diverged = true;
                rows[i].flags = "xi_diverged";
            }
        } catch (const OverflowRiskError&) {
            rows[i].report.T = models[i].T;
            rows[i].report.B = models[i].B;
            rows[i].report.J = models[i].J;
            rows[i].report.alpha = models[i].alpha();
            rows[i].report.F1 = rows[i].report.F12 = rows[i].report.rate =
                rows[i].report.xi = rows[i].report.delta_F = rows[i].report.c =
                    rows[i].report.c_over_T2 = std::numeric_limits<double>::quiet_NaN();
            rows[i].flags = "overflow_skipped";
        }
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Zero-derivative curve of the one-site probability.
// ---------------------------------------------------------------------------

struct ZeroDerivativePoint {
    double B_over_J = 0.0;
    double T_star = 0.0;
};

/// Roots of d P(up) / dT inside [T_lo, T_hi] for each B/J ratio. Ratios with
/// an identically flat P(up) (B = 0) or no sign change yield no entry.
inline std::vector<ZeroDerivativePoint> zero_derivative_curve(
    double J, std::span<const double> B_over_J_grid, double T_lo, double T_hi,
    int scan_points = 64, double tol = 1e-6) {
    if (!(T_lo > 0.0) || !(T_hi > T_lo)) throw ValidationError("bad temperature bracket");
    std::vector<ZeroDerivativePoint> roots;
    for (double ratio : B_over_J_grid) {
        const double B = ratio * J;
        auto dPup = [&](double temp) {
            const double h = 1e-4 * temp;
            auto d = [&](double hh) {
                const auto up = marginal(SpinChainModel(B, {J}, temp + hh), 1);
                const auto dn = marginal(SpinChainModel(B, {J}, temp - hh), 1);
                return (up.probs[0] - dn.probs[0]) / (2.0 * hh);
            };
            return (4.0 * d(0.5 * h) - d(h)) / 3.0;
        };
        std::vector<double> ts(static_cast<std::size_t>(scan_points));
        std::vector<double> gs(static_cast<std::size_t>(scan_points));
        double gmax = 0.0;
        for (int i = 0; i < scan_points; ++i) {
            ts[static_cast<std::size_t>(i)] =
                T_lo + (T_hi - T_lo) * i / (scan_points - 1);
            gs[static_cast<std::size_t>(i)] = dPup(ts[static_cast<std::size_t>(i)]);
            gmax = std::max(gmax, std::abs(gs[static_cast<std::size_t>(i)]));
        }
        if (gmax < 1e-13) continue;  // degenerate: P(up) flat in T
        for (int i = 0; i + 1 < scan_points; ++i) {
            if (gs[static_cast<std::size_t>(i)] == 0.0) continue;
            if (gs[static_cast<std::size_t>(i)] * gs[static_cast<std::size_t>(i) + 1] < 0.0) {
                const double t = bisect_root(dPup, ts[static_cast<std::size_t>(i)],
                                             ts[static_cast<std::size_t>(i) + 1], tol);
                roots.push_back({ratio, t});
            }
        }
    }
    return roots;
}

// ---------------------------------------------------------------------------
// Markov-order measurement on chain marginals.
// ---------------------------------------------------------------------------

struct ChainMarkovOrder {
    int measured = -1;              // smallest order passing the truncation test
    double deviation_at_measured = 0.0;
    double factorization_defect = 0.0;  // max |P(s1 s2) - P(s1) P(s2)|
};

inline ChainMarkovOrder verify_chain_markov_order(const SpinChainModel& model,
                                                  double tol = 1e-9) {
    const int probe_depth = 2 * model.range() + 1;
    std::vector<WindowDistribution> windows;
    for (int n = 1; n <= probe_depth + 1; ++n) windows.push_back(marginal(model, n));

    ChainMarkovOrder out;
    for (int claimed = 0; claimed <= probe_depth - 1; ++claimed) {
        const double dev =
            detail::conditional_truncation_deviation(windows, claimed, probe_depth);
        if (dev <= tol) {
            out.measured = claimed;
            out.deviation_at_measured = dev;
            break;
        }
    }
    const auto& w1 = windows[0];
    const auto& w2 = windows[1];
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const double defect =
                std::abs(w2.probs[static_cast<std::size_t>(2 * a + b)] -
                         w1.probs[static_cast<std::size_t>(a)] *
                             w1.probs[static_cast<std::size_t>(b)]);
            out.factorization_defect = std::max(out.factorization_defect, defect);
        }
    }
    return out;
}

}  // namespace fim

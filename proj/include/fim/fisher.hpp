#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fim/common.hpp"
#include "fim/process.hpp"

namespace fim {

// ---------------------------------------------------------------------------
// Fisher information matrices for finite-window distributions, the Markov
// decomposition F_{1:N} = F_{1:M} + (N-M) f, Gaussian closed forms and the
// sample-mean Fisher bound.
// ---------------------------------------------------------------------------

/// Symmetric p x p Fisher information matrix (row-major storage).
struct FisherMatrix {
    int dim = 1;
    std::vector<double> m;  // dim*dim entries

    static FisherMatrix zero(int p) {
        FisherMatrix f;
        f.dim = p;
        f.m.assign(static_cast<std::size_t>(p) * static_cast<std::size_t>(p), 0.0);
        return f;
    }

    double& at(int i, int j) { return m[static_cast<std::size_t>(i) * dim + j]; }
    double at(int i, int j) const { return m[static_cast<std::size_t>(i) * dim + j]; }

    /// The (0,0) entry; only meaningful for scalar-parameter models.
    double scalar() const { return m[0]; }

    FisherMatrix& operator+=(const FisherMatrix& o) {
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += o.m[i];
        return *this;
    }
    FisherMatrix& operator-=(const FisherMatrix& o) {
        for (std::size_t i = 0; i < m.size(); ++i) m[i] -= o.m[i];
        return *this;
    }
    FisherMatrix& operator*=(double s) {
        for (auto& v : m) v *= s;
        return *this;
    }
    friend FisherMatrix operator+(FisherMatrix a, const FisherMatrix& b) { return a += b; }
    friend FisherMatrix operator-(FisherMatrix a, const FisherMatrix& b) { return a -= b; }
    friend FisherMatrix operator*(double s, FisherMatrix a) { return a *= s; }

    double max_abs() const {
        double w = 0.0;
        for (double v : m) w = std::max(w, std::abs(v));
        return w;
    }

    double max_abs_diff(const FisherMatrix& o) const {
        double w = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) w = std::max(w, std::abs(m[i] - o.m[i]));
        return w;
    }

    double asymmetry() const {
        double w = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) w = std::max(w, std::abs(at(i, j) - at(j, i)));
        return w;
    }

    double min_eigenvalue() const {
        return symmetric_eigenvalues(m, static_cast<std::size_t>(dim)).front();
    }
};

/// How d/dtheta log P is realized.
struct DerivativeScheme {
    enum class Mode { Analytic, CentralDifference };
    Mode mode = Mode::CentralDifference;
    /// Relative step: h_i = step * max(1, |theta_i|) (central differences).
    double step = 1e-5;
    bool richardson = false;

    static DerivativeScheme analytic() { return {Mode::Analytic, 0.0, false}; }
    static DerivativeScheme central(double step = 1e-5, bool richardson = false) {
        return {Mode::CentralDifference, step, richardson};
    }
};

// ---------------------------------------------------------------------------
// Window distributions together with per-parameter log-derivatives.
// ---------------------------------------------------------------------------

namespace detail {

struct WindowWithScores {
    WindowDistribution window;
    // score[i][x] = d log P(x) / d theta_i; 0 where P(x) == 0.
    std::vector<std::vector<double>> score;
};

/// d pi / d theta_i for the lifted stationary distribution: with column
/// stochastic T and T pi = pi, solve [(I - T) + 1 1^T] dpi = T' pi.
inline std::vector<double> stationary_derivative(const FiniteMarkovModel& model,
                                                 const WindowDistribution& pi, int param) {
    const std::size_t k = model.history_count();
    if (model.order() == 0) return {0.0};
    const int d = model.alphabet().size;
    const auto dq = model.dtable(param);
    std::vector<double> rhs(k, 0.0);
    for (std::size_t h = 0; h < k; ++h) {
        for (int x = 0; x < d; ++x) {
            const std::size_t h2 = lifted_successor(h, x, d, model.order());
            rhs[h2] += dq[h * static_cast<std::size_t>(d) + static_cast<std::size_t>(x)] *
                       pi.probs[h];
        }
    }
    const auto t = lifted_matrix(model);
    std::vector<double> a(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            a[i * k + j] = (i == j ? 1.0 : 0.0) - t[i * k + j] + 1.0;
    return solve_linear(std::move(a), std::move(rhs));
}

/// Analytic route: carry dP alongside P while extending windows, then
/// score = dP / P.
inline WindowWithScores window_scores_analytic(const FiniteMarkovModel& model, int n,
                                               std::size_t cap) {
    const int d = model.alphabet().size;
    const int m = model.order();
    const int p = model.param_count();
    checked_pow(static_cast<std::size_t>(d), static_cast<unsigned>(n), cap);

    WindowDistribution win = stationary_distribution(model);
    std::vector<std::vector<double>> dwin(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) dwin[static_cast<std::size_t>(i)] =
        stationary_derivative(model, win, i);

    auto marginalize_last_vec = [&](const std::vector<double>& v) {
        std::vector<double> out(v.size() / static_cast<std::size_t>(d), 0.0);
        for (std::size_t i = 0; i < out.size(); ++i) {
            NeumaierSum s;
            for (int x = 0; x < d; ++x)
                s.add(v[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(x)]);
            out[i] = s.value();
        }
        return out;
    };

    if (n <= m) {
        while (win.length > n) {
            win = win.marginalize_last();
            for (auto& dv : dwin) dv = marginalize_last_vec(dv);
        }
    } else {
        std::vector<std::vector<double>> dq(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i) dq[static_cast<std::size_t>(i)] = model.dtable(i);
        const std::size_t dd = static_cast<std::size_t>(d);
        std::size_t hmask = 1;
        for (int i = 0; i < m; ++i) hmask *= dd;
        for (int len = m; len < n; ++len) {
            WindowDistribution next;
            next.alphabet_size = d;
            next.length = len + 1;
            next.probs.assign(win.probs.size() * dd, 0.0);
            std::vector<std::vector<double>> dnext(static_cast<std::size_t>(p));
            for (auto& v : dnext) v.assign(next.probs.size(), 0.0);
            for (std::size_t i = 0; i < win.probs.size(); ++i) {
                const std::size_t h = (m == 0) ? 0 : i % hmask;
                for (std::size_t x = 0; x < dd; ++x) {
                    const double q = model.conditional(h, static_cast<int>(x));
                    next.probs[i * dd + x] = win.probs[i] * q;
                    for (int pi_ = 0; pi_ < p; ++pi_) {
                        const auto ip = static_cast<std::size_t>(pi_);
                        dnext[ip][i * dd + x] =
                            dwin[ip][i] * q + win.probs[i] * dq[ip][h * dd + x];
                    }
                }
            }
            win = std::move(next);
            dwin = std::move(dnext);
        }
    }

    WindowWithScores out;
    out.window = std::move(win);
    out.score.assign(static_cast<std::size_t>(p), {});
    for (int i = 0; i < p; ++i) {
        auto& s = out.score[static_cast<std::size_t>(i)];
        s.assign(out.window.probs.size(), 0.0);
        for (std::size_t x = 0; x < s.size(); ++x) {
            const double pr = out.window.probs[x];
            if (pr > 0.0) s[x] = dwin[static_cast<std::size_t>(i)][x] / pr;
        }
    }
    return out;
}

inline WindowWithScores window_scores_central(const FiniteMarkovModel& model, int n,
                                              const DerivativeScheme& scheme,
                                              std::size_t cap) {
    const int p = model.param_count();
    const auto theta = model.theta();
    const auto domain = model.theta_domain();

    WindowWithScores out;
    out.window = window_distribution(model, n, cap);
    out.score.assign(static_cast<std::size_t>(p), {});

    for (int i = 0; i < p; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const double h = scheme.step * std::max(1.0, std::abs(theta[ii]));
        if (theta[ii] - 2.0 * h < domain[ii][0] || theta[ii] + 2.0 * h > domain[ii][1]) {
            throw BoundaryThetaError(model.id() +
                                     ": theta too close to its domain edge for step " +
                                     std::to_string(h));
        }
        auto diff_at = [&](double hh) {
            std::vector<double> tp(theta.begin(), theta.end());
            std::vector<double> tm(theta.begin(), theta.end());
            tp[ii] += hh;
            tm[ii] -= hh;
            const auto wp = window_distribution(model.with_theta(tp), n, cap);
            const auto wm = window_distribution(model.with_theta(tm), n, cap);
            std::vector<double> g(out.window.probs.size(), 0.0);
            for (std::size_t x = 0; x < g.size(); ++x) {
                if (out.window.probs[x] > 0.0 && wp.probs[x] > 0.0 && wm.probs[x] > 0.0)
                    g[x] = (std::log(wp.probs[x]) - std::log(wm.probs[x])) / (2.0 * hh);
            }
            return g;
        };
        auto g = diff_at(h);
        if (scheme.richardson) {
            const auto g2 = diff_at(0.5 * h);
            for (std::size_t x = 0; x < g.size(); ++x)
                g[x] = (4.0 * g2[x] - g[x]) / 3.0;
        }
        out.score[ii] = std::move(g);
    }
    return out;
}

inline WindowWithScores window_scores(const FiniteMarkovModel& model, int n,
                                      const DerivativeScheme& scheme, std::size_t cap) {
    if (scheme.mode == DerivativeScheme::Mode::Analytic) {
        return window_scores_analytic(model, n, cap);
    }
    return window_scores_central(model, n, scheme, cap);
}

inline constexpr double kProbabilityFloor = 1e-300;

/// Assemble sum_x P(x) g_i(x) g_j(x) with compensated summation.
inline FisherMatrix fisher_from_scores(const WindowWithScores& ws) {
    const int p = static_cast<int>(ws.score.size());
    FisherMatrix f = FisherMatrix::zero(p);
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            NeumaierSum s;
            const auto& gi = ws.score[static_cast<std::size_t>(i)];
            const auto& gj = ws.score[static_cast<std::size_t>(j)];
            for (std::size_t x = 0; x < ws.window.probs.size(); ++x) {
                const double pr = ws.window.probs[x];
                if (pr < kProbabilityFloor) continue;
                s.add(pr * gi[x] * gj[x]);
            }
            f.at(i, j) = s.value();
            f.at(j, i) = s.value();
        }
    }
    return f;
}

}  // namespace detail

/// Exact joint Fisher information matrix of the length-N window.
inline FisherMatrix joint_fisher(const FiniteMarkovModel& model, int N,
                                 const DerivativeScheme& scheme = {},
                                 std::size_t cap = kDefaultEnumerationCap) {
    if (N < 0) throw ValidationError("window length must be non-negative");
    if (N == 0) return FisherMatrix::zero(model.param_count());
    return detail::fisher_from_scores(detail::window_scores(model, N, scheme, cap));
}

/// Conditional Fisher information F_{k | 1:k-1}, computed directly from the
/// conditional log-derivatives weighted by the joint distribution.
inline FisherMatrix conditional_fisher(const FiniteMarkovModel& model, int k,
                                       const DerivativeScheme& scheme = {},
                                       std::size_t cap = kDefaultEnumerationCap) {
    if (k < 2) throw ValidationError("conditional_fisher requires k >= 2");
    const auto full = detail::window_scores(model, k, scheme, cap);
    const auto prefix = detail::window_scores(model, k - 1, scheme, cap);
    const int p = model.param_count();
    const std::size_t d = static_cast<std::size_t>(model.alphabet().size);
    FisherMatrix f = FisherMatrix::zero(p);
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            NeumaierSum s;
            for (std::size_t x = 0; x < full.window.probs.size(); ++x) {
                const double pr = full.window.probs[x];
                if (pr < detail::kProbabilityFloor) continue;
                const std::size_t xp = x / d;
                const double gi = full.score[static_cast<std::size_t>(i)][x] -
                                  prefix.score[static_cast<std::size_t>(i)][xp];
                const double gj = full.score[static_cast<std::size_t>(j)][x] -
                                  prefix.score[static_cast<std::size_t>(j)][xp];
                s.add(pr * gi * gj);
            }
            f.at(i, j) = s.value();
            f.at(j, i) = s.value();
        }
    }
    return f;
}

/// xi = F_{1:2} / (2 F_1), with the divergence convention for F1 -> 0.
struct XiRatio {
    double value = 0.0;
    bool diverged = false;
};

inline XiRatio xi_ratio(double f12, double f1) {
    if (f1 < 0.0 || f12 < 0.0) throw ValidationError("xi_ratio requires non-negative inputs");
    constexpr double kFloor = 1e-30;
    if (f1 < kFloor && f12 < kFloor)
        throw IndeterminateError("xi_ratio: both Fisher informations vanish");
    if (f1 < kFloor) return {std::numeric_limits<double>::infinity(), true};
    return {f12 / (2.0 * f1), false};
}

/// Full decomposition record for a length-N window.
struct FisherReport {
    int N = 0;
    int order = 0;
    FisherMatrix F1;
    FisherMatrix F_joint;                        // F_{1:N}, independently computed
    std::vector<FisherMatrix> conditional_terms; // F_{k|1:k-1}, k = 2..N
    FisherMatrix rate;                           // f = F_{M+1|1:M}
    FisherMatrix excess;                         // eps = F_{1:M} - M f
    double decomposition_residual = 0.0;         // |F_joint - F_{1:M} - (N-M) f|, max entry
    std::optional<XiRatio> xi;                   // scalar case with N >= 2 only
};

/// Computes the decomposition F_{1:N} = F_{1:M} + (N-M) f and verifies it
/// against an independently computed joint Fisher matrix.
inline FisherReport markov_decomposition(const FiniteMarkovModel& model, int N,
                                         const DerivativeScheme& scheme = {},
                                         std::size_t cap = kDefaultEnumerationCap) {
    const int m = model.order();
    if (N < m + 1) throw ValidationError("markov_decomposition requires N >= M + 1");
    FisherReport rep;
    rep.N = N;
    rep.order = m;
    rep.F1 = joint_fisher(model, 1, scheme, cap);
    rep.F_joint = joint_fisher(model, N, scheme, cap);
    for (int k = 2; k <= N; ++k)
        rep.conditional_terms.push_back(conditional_fisher(model, k, scheme, cap));
    rep.rate = (m == 0) ? rep.F1 : conditional_fisher(model, m + 1, scheme, cap);
    const FisherMatrix f_1m = joint_fisher(model, m, scheme, cap);
    rep.excess = f_1m - static_cast<double>(m) * rep.rate;
    FisherMatrix predicted = f_1m + static_cast<double>(N - m) * rep.rate;
    rep.decomposition_residual = predicted.max_abs_diff(rep.F_joint);
    const double tol =
        (scheme.mode == DerivativeScheme::Mode::Analytic) ? 1e-8 : 1e-5;
    if (rep.decomposition_residual > tol * std::max(1.0, rep.F_joint.max_abs())) {
        throw NumericError(model.id() + ": Markov decomposition residual " +
                           std::to_string(rep.decomposition_residual) +
                           " exceeds tolerance");
    }
    if (model.param_count() == 1 && N >= 2) {
        const double f12 = rep.F1.scalar() + rep.conditional_terms.front().scalar();
        try {
            rep.xi = xi_ratio(std::max(0.0, f12), std::max(0.0, rep.F1.scalar()));
        } catch (const IndeterminateError&) {
            rep.xi = std::nullopt;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Gaussian closed forms.
// ---------------------------------------------------------------------------

struct GaussianPairFisher {
    double joint = 0.0;     // F_{X,Y}(mu)
    double marginal = 0.0;  // F_X(mu) = F_Y(mu)
    double ratio = 0.0;     // F_{X,Y} / (F_X + F_Y) = 1 / (1 + rho)
};

/// Mean-estimation Fisher information for a bivariate Gaussian with common
/// mean, variance gamma0 and correlation rho.
inline GaussianPairFisher gaussian_pair_fisher(double /*mu*/, double gamma0, double rho) {
    if (!(gamma0 > 0.0)) throw ValidationError("gamma0 must be positive");
    if (rho < -1.0 || rho > 1.0) throw ValidationError("rho must lie in [-1, 1]");
    if (rho == -1.0)
        throw SingularCovarianceError("rho = -1 makes the pair covariance singular");
    GaussianPairFisher out;
    out.marginal = 1.0 / gamma0;
    out.joint = (2.0 / gamma0) / (1.0 + rho);
    out.ratio = 1.0 / (1.0 + rho);
    return out;
}

struct SampleMeanFisher {
    double fisher = 0.0;          // N (dmu/dtheta)^2 / (sigma^2 + 2 sum C_i)
    double exact_variance = 0.0;  // Var[Y] = sigma^2/N + (2/N^2) sum (N-i) C_i
};

/// Fisher information carried by the sample mean of N stationary outcomes
/// with local variance sigma2 and lag covariances C_1..C_{N-1} (missing
/// trailing lags are treated as zero).
inline SampleMeanFisher sample_mean_fisher(double sigma2, std::span<const double> covariances,
                                           double dmu_dtheta, long long N) {
    if (N < 1) throw ValidationError("sample_mean_fisher requires N >= 1");
    NeumaierSum tail, weighted;
    const std::size_t lags =
        std::min(covariances.size(), static_cast<std::size_t>(N - 1));
    for (std::size_t i = 1; i <= lags; ++i) {
        tail.add(covariances[i - 1]);
        weighted.add(static_cast<double>(N - static_cast<long long>(i)) *
                     covariances[i - 1]);
    }
    const double denom = sigma2 + 2.0 * tail.value();
    if (!(denom > 0.0))
        throw InvalidVarianceError("sigma^2 + 2 sum C_i must be positive");
    SampleMeanFisher out;
    const double n = static_cast<double>(N);
    out.fisher = n * dmu_dtheta * dmu_dtheta / denom;
    out.exact_variance = sigma2 / n + (2.0 / (n * n)) * weighted.value();
    return out;
}

}  // namespace fim

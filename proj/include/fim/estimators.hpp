#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fim/common.hpp"
#include "fim/fisher.hpp"
#include "fim/process.hpp"
#include "fim/sampling.hpp"

namespace fim {

// ---------------------------------------------------------------------------
// Maximum likelihood estimation with the sliding-window sufficient-statistic
// reduction, the deliberately misspecified uncorrelated variant, the
// sample-mean estimator, and the Monte-Carlo MSE harness.
// ---------------------------------------------------------------------------

/// Counts of every length-(M+1) window plus the first M symbols, which carry
/// the boundary term of the likelihood. sum(counts) == length - M.
struct SufficientStats {
    int order = 0;
    int alphabet_size = 2;
    std::vector<std::int64_t> counts;  // size d^(M+1)
    std::vector<int> boundary;         // first M symbols
    std::int64_t total = 0;
};

inline SufficientStats sliding_window_stats(std::span<const int> symbols, int order,
                                            int alphabet_size = 2) {
    if (order < 0) throw ValidationError("order must be non-negative");
    if (static_cast<long long>(symbols.size()) < order + 1)
        throw TooShortError("trajectory shorter than M + 1 symbols");
    SufficientStats stats;
    stats.order = order;
    stats.alphabet_size = alphabet_size;
    const std::size_t d = static_cast<std::size_t>(alphabet_size);
    const std::size_t cells =
        checked_pow(d, static_cast<unsigned>(order) + 1, kDefaultEnumerationCap);
    stats.counts.assign(cells, 0);
    stats.boundary.assign(symbols.begin(), symbols.begin() + order);
    std::size_t window = 0;
    for (int i = 0; i < order; ++i)
        window = window * d + static_cast<std::size_t>(symbols[static_cast<std::size_t>(i)]);
    const std::size_t mod = cells / d;
    for (std::size_t i = static_cast<std::size_t>(order); i < symbols.size(); ++i) {
        window = (window % mod) * d + static_cast<std::size_t>(symbols[i]);
        ++stats.counts[window];
        ++stats.total;
    }
    return stats;
}

struct LogLikelihood {
    double full = -std::numeric_limits<double>::infinity();
    double truncated = -std::numeric_limits<double>::infinity();  // boundary dropped
};

/// L(theta) = sum_q f_q log C(q) + R, with the boundary remainder R taken
/// exactly from the stationary law of the first M symbols. -infinity is a
/// valid value and signals data impossible under the model.
inline LogLikelihood log_likelihood(const SufficientStats& stats,
                                    const FiniteMarkovModel& model) {
    if (model.order() != stats.order || model.alphabet().size != stats.alphabet_size)
        throw ValidationError("stats incompatible with model");
    const std::size_t d = static_cast<std::size_t>(model.alphabet().size);
    NeumaierSum body;
    for (std::size_t w = 0; w < stats.counts.size(); ++w) {
        const std::int64_t c = stats.counts[w];
        if (c == 0) continue;
        const double q = model.conditional(w / d, static_cast<int>(w % d));
        if (q <= 0.0) return {};
        body.add(static_cast<double>(c) * std::log(q));
    }
    LogLikelihood out;
    out.truncated = body.value();
    if (model.order() == 0) {
        out.full = out.truncated;
        return out;
    }
    const auto pi = stationary_distribution(model);
    const double pb = pi.prob(std::span<const int>(stats.boundary));
    if (pb <= 0.0) return {};
    out.full = out.truncated + std::log(pb);
    return out;
}

namespace detail {

/// Coarse grid scan followed by golden-section refinement. Objective
/// evaluations that throw (e.g. non-ergodic parameter points) count as
/// -infinity.
inline double maximize_scalar(const std::function<double(double)>& objective, double lo,
                              double hi, double tol, int grid_points = 32) {
    auto safe = [&](double th) {
        try {
            const double v = objective(th);
            return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };
    double best_x = lo, best_v = -std::numeric_limits<double>::infinity();
    const int n = grid_points;
    std::vector<double> xs(static_cast<std::size_t>(n)), vs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // interior grid: endpoints are often singular (zero conditionals)
        const double x = lo + (hi - lo) * (i + 0.5) / n;
        xs[static_cast<std::size_t>(i)] = x;
        vs[static_cast<std::size_t>(i)] = safe(x);
        if (vs[static_cast<std::size_t>(i)] > best_v) {
            best_v = vs[static_cast<std::size_t>(i)];
            best_x = x;
        }
    }
    if (!std::isfinite(best_v))
        throw NoFiniteLikelihoodError("objective is -infinity on the whole grid");
    double blo = lo, bhi = hi;
    for (int i = 0; i < n; ++i) {
        if (xs[static_cast<std::size_t>(i)] == best_x) {
            blo = (i == 0) ? lo : xs[static_cast<std::size_t>(i) - 1];
            bhi = (i == n - 1) ? hi : xs[static_cast<std::size_t>(i) + 1];
            break;
        }
    }
    return golden_section_maximize(safe, blo, bhi, tol);
}

}  // namespace detail

/// Maximum likelihood estimate for a scalar-parameter family. `model`
/// provides the family; its stored theta is irrelevant.
inline double mle(const SufficientStats& stats, const FiniteMarkovModel& model,
                  double lo, double hi, double tol = 1e-8) {
    if (model.param_count() != 1)
        throw ValidationError("mle supports scalar parameters only");
    return detail::maximize_scalar(
        [&](double th) { return log_likelihood(stats, model.with_theta({th})).full; },
        lo, hi, tol);
}

/// Misspecified estimator ignoring all correlations: maximizes
/// sum_x n_x log pi_theta(x) over the stationary one-site marginal.
/// `stats` must be single-site counts (order 0).
inline double uncorrelated_mle(const SufficientStats& stats, const FiniteMarkovModel& model,
                               double lo, double hi, double tol = 1e-8) {
    if (model.param_count() != 1)
        throw ValidationError("uncorrelated_mle supports scalar parameters only");
    if (stats.order != 0)
        throw ValidationError("uncorrelated_mle expects single-site counts");
    return detail::maximize_scalar(
        [&](double th) {
            const auto m = model.with_theta({th});
            const auto pi1 = window_distribution(m, 1);
            NeumaierSum s;
            for (std::size_t x = 0; x < stats.counts.size(); ++x) {
                if (stats.counts[x] == 0) continue;
                if (pi1.probs[x] <= 0.0)
                    return -std::numeric_limits<double>::infinity();
                s.add(static_cast<double>(stats.counts[x]) * std::log(pi1.probs[x]));
            }
            return s.value();
        },
        lo, hi, tol);
}

// ---------------------------------------------------------------------------
// Monte-Carlo MSE harness.
// ---------------------------------------------------------------------------

enum class EstimatorId { Mle, UncorrelatedMle, SampleMean };

inline std::string to_string(EstimatorId id) {
    switch (id) {
        case EstimatorId::Mle: return "mle";
        case EstimatorId::UncorrelatedMle: return "uncorrelated-mle";
        case EstimatorId::SampleMean: return "sample-mean";
    }
    return "?";
}

inline EstimatorId estimator_from_string(const std::string& s) {
    if (s == "mle") return EstimatorId::Mle;
    if (s == "uncorrelated-mle") return EstimatorId::UncorrelatedMle;
    if (s == "sample-mean") return EstimatorId::SampleMean;
    throw ValidationError("unknown estimator: " + s);
}

/// One seeded Monte-Carlo record: per-replica estimates on an N grid with
/// aggregated MSE, jackknife standard errors and the CRB reference curves.
struct EstimationRun {
    std::string estimator_id;
    std::string model_id;
    double theta_true = 0.0;
    std::vector<long long> N_grid;
    int replicas = 0;
    std::uint64_t base_seed = 0;
    std::vector<std::vector<double>> estimates;  // [N index][replica]
    std::vector<double> mse;
    std::vector<double> mse_stderr;
    std::vector<double> crb_markov;  // 1 / (F_{1:M} + (N-M) f)
    std::vector<double> crb_iid;     // 1 / (N F_1)
};

namespace detail {

/// Jackknife standard error of the mean of squared errors.
inline double jackknife_stderr(std::span<const double> sq_errors) {
    const std::size_t n = sq_errors.size();
    if (n < 2) return 0.0;
    NeumaierSum total;
    for (double v : sq_errors) total.add(v);
    const double sum = total.value();
    const double mean = sum / static_cast<double>(n);
    NeumaierSum dev2;
    for (double v : sq_errors) {
        const double leave_out = (sum - v) / static_cast<double>(n - 1);
        dev2.add((leave_out - mean) * (leave_out - mean));
    }
    return std::sqrt(dev2.value() * static_cast<double>(n - 1) / static_cast<double>(n));
}

inline void aggregate_mse(EstimationRun& run) {
    for (std::size_t ni = 0; ni < run.N_grid.size(); ++ni) {
        std::vector<double> sq;
        sq.reserve(run.estimates[ni].size());
        for (double est : run.estimates[ni]) {
            const double e = est - run.theta_true;
            sq.push_back(e * e);
        }
        NeumaierSum s;
        for (double v : sq) s.add(v);
        run.mse.push_back(s.value() / static_cast<double>(sq.size()));
        run.mse_stderr.push_back(jackknife_stderr(sq));
    }
}

}  // namespace detail

/// Seeded MSE experiment for a finite-alphabet model family. Replica r uses
/// seed base_seed + r; the N grid shares each replica's stream, so shorter
/// trajectories are prefixes of longer ones.
inline EstimationRun run_mse_experiment(const FiniteMarkovModel& model, double theta_true,
                                        EstimatorId estimator,
                                        std::vector<long long> N_grid, int replicas,
                                        std::uint64_t base_seed, int threads = 1) {
    if (replicas < 2) throw ValidationError("need at least 2 replicas");
    for (long long n : N_grid)
        if (n < model.order() + 1) throw ValidationError("grid N below M + 1");

    const auto truth = model.with_theta({theta_true});
    const double lo = model.theta_domain()[0][0];
    const double hi = model.theta_domain()[0][1];

    EstimationRun run;
    run.estimator_id = to_string(estimator);
    run.model_id = model.id();
    run.theta_true = theta_true;
    run.N_grid = N_grid;
    run.replicas = replicas;
    run.base_seed = base_seed;
    run.estimates.assign(N_grid.size(), std::vector<double>(static_cast<std::size_t>(replicas)));

    // mean map for the sample-mean estimator: theta -> E[X]
    auto mean_of = [&](double th) {
        const auto w1 = window_distribution(model.with_theta({th}), 1);
        double m = 0.0;
        for (std::size_t x = 0; x < w1.probs.size(); ++x)
            m += static_cast<double>(x) * w1.probs[x];
        return m;
    };

    const long long n_max = *std::max_element(N_grid.begin(), N_grid.end());
    parallel_for(static_cast<std::size_t>(replicas), threads, [&](std::size_t r) {
        const auto traj =
            sample_finite(truth, n_max, base_seed + static_cast<std::uint64_t>(r));
        for (std::size_t ni = 0; ni < N_grid.size(); ++ni) {
            const std::span<const int> prefix(traj.values.data(),
                                              static_cast<std::size_t>(N_grid[ni]));
            double est = 0.0;
            switch (estimator) {
                case EstimatorId::Mle: {
                    const auto stats = sliding_window_stats(prefix, model.order(),
                                                            model.alphabet().size);
                    est = mle(stats, model, lo, hi);
                    break;
                }
                case EstimatorId::UncorrelatedMle: {
                    const auto stats = sliding_window_stats(prefix, 0,
                                                            model.alphabet().size);
                    est = uncorrelated_mle(stats, model, lo, hi);
                    break;
                }
                case EstimatorId::SampleMean: {
                    NeumaierSum s;
                    for (int v : prefix) s.add(static_cast<double>(v));
                    const double target = s.value() / static_cast<double>(prefix.size());
                    est = detail::maximize_scalar(
                        [&](double th) {
                            const double d = mean_of(th) - target;
                            return -d * d;
                        },
                        lo, hi, 1e-8);
                    break;
                }
            }
            run.estimates[ni][r] = est;
        }
    });
    detail::aggregate_mse(run);

    // CRB reference curves from the exact Fisher quantities of the family.
    const auto scheme = truth.has_analytic_derivatives()
                            ? DerivativeScheme::analytic()
                            : DerivativeScheme::central();
    const int m = truth.order();
    const double f1 = joint_fisher(truth, 1, scheme).scalar();
    const double f1m = joint_fisher(truth, m, scheme).scalar();
    const double f = (m == 0) ? f1 : conditional_fisher(truth, m + 1, scheme).scalar();
    for (long long n : N_grid) {
        run.crb_markov.push_back(1.0 / (f1m + static_cast<double>(n - m) * f));
        run.crb_iid.push_back(1.0 / (static_cast<double>(n) * f1));
    }
    return run;
}

/// Sample-mean estimation of mu on the Gaussian chain. The reference curve
/// is the inverse sample-mean Fisher information; crb_iid ignores
/// correlations (gamma0 / N).
inline EstimationRun run_gaussian_mse_experiment(const GaussianMarkovModel& model,
                                                 std::vector<long long> N_grid,
                                                 int replicas, std::uint64_t base_seed,
                                                 int threads = 1) {
    if (replicas < 2) throw ValidationError("need at least 2 replicas");
    for (long long n : N_grid)
        if (n < 1) throw ValidationError("grid N must be positive");

    EstimationRun run;
    run.estimator_id = to_string(EstimatorId::SampleMean);
    run.model_id = model.id();
    run.theta_true = model.mu;
    run.N_grid = N_grid;
    run.replicas = replicas;
    run.base_seed = base_seed;
    run.estimates.assign(N_grid.size(), std::vector<double>(static_cast<std::size_t>(replicas)));

    const long long n_max = *std::max_element(N_grid.begin(), N_grid.end());
    parallel_for(static_cast<std::size_t>(replicas), threads, [&](std::size_t r) {
        const auto traj =
            sample_gaussian(model, n_max, base_seed + static_cast<std::uint64_t>(r));
        for (std::size_t ni = 0; ni < N_grid.size(); ++ni) {
            NeumaierSum s;
            for (long long i = 0; i < N_grid[ni]; ++i)
                s.add(traj.values[static_cast<std::size_t>(i)]);
            run.estimates[ni][r] = s.value() / static_cast<double>(N_grid[ni]);
        }
    });
    detail::aggregate_mse(run);

    for (long long n : N_grid) {
        std::vector<double> covs;
        covs.reserve(static_cast<std::size_t>(std::min<long long>(n - 1, 2048)));
        for (long long k = 1; k < n && k <= 2048; ++k)
            covs.push_back(model.covariance(static_cast<int>(k)));
        const auto smf = sample_mean_fisher(model.gamma0, covs, 1.0, n);
        run.crb_markov.push_back(1.0 / smf.fisher);
        run.crb_iid.push_back(model.gamma0 / static_cast<double>(n));
    }
    return run;
}

}  // namespace fim

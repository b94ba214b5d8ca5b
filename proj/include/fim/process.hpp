#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fim/common.hpp"

namespace fim {

// ---------------------------------------------------------------------------
// Parameterized stationary finite-alphabet processes with finite memory,
// exact joint/marginal/conditional window distributions, Markov-order
// verification and entropy quantities.
// ---------------------------------------------------------------------------

struct Alphabet {
    int size = 2;

    explicit Alphabet(int d) : size(d) {
        if (d < 1) throw ValidationError("alphabet size must be positive");
    }
};

/// Exact joint distribution of a length-n window, stored densely.
/// Symbol tuples are encoded base-d with the first symbol most significant.
struct WindowDistribution {
    int alphabet_size = 2;
    int length = 0;
    std::vector<double> probs;  // size d^length

    double prob(std::size_t index) const { return probs[index]; }

    double prob(std::span<const int> symbols) const { return probs[index_of(symbols)]; }

    std::size_t index_of(std::span<const int> symbols) const {
        std::size_t idx = 0;
        for (int s : symbols) idx = idx * static_cast<std::size_t>(alphabet_size) +
                                    static_cast<std::size_t>(s);
        return idx;
    }

    double total() const {
        NeumaierSum s;
        for (double p : probs) s.add(p);
        return s.value();
    }

    /// Sum out the last symbol.
    WindowDistribution marginalize_last() const {
        if (length == 0) throw ValidationError("cannot marginalize an empty window");
        WindowDistribution out;
        out.alphabet_size = alphabet_size;
        out.length = length - 1;
        const std::size_t d = static_cast<std::size_t>(alphabet_size);
        out.probs.assign(probs.size() / d, 0.0);
        for (std::size_t i = 0; i < out.probs.size(); ++i) {
            NeumaierSum s;
            for (std::size_t x = 0; x < d; ++x) s.add(probs[i * d + x]);
            out.probs[i] = s.value();
        }
        return out;
    }

    /// Sum out the first symbol.
    WindowDistribution marginalize_first() const {
        if (length == 0) throw ValidationError("cannot marginalize an empty window");
        WindowDistribution out;
        out.alphabet_size = alphabet_size;
        out.length = length - 1;
        const std::size_t d = static_cast<std::size_t>(alphabet_size);
        const std::size_t block = probs.size() / d;
        out.probs.assign(block, 0.0);
        for (std::size_t x = 0; x < d; ++x) {
            for (std::size_t i = 0; i < block; ++i) out.probs[i] += probs[x * block + i];
        }
        return out;
    }

    /// Shannon entropy in nats.
    double entropy() const {
        NeumaierSum s;
        for (double p : probs) {
            if (p > 0.0) s.add(-p * std::log(p));
        }
        return s.value();
    }
};

/// theta-parameterized conditional distribution over a finite alphabet with
/// declared Markov order M. The conditional table is a function of theta so
/// that derivative schemes can re-evaluate the model at shifted parameters.
///
/// Table layout: row = history index (base-d, first symbol most significant,
/// d^M rows), column = next symbol. An optional analytic derivative table
/// (same layout, one per parameter component) enables the analytic scheme.
class FiniteMarkovModel {
  public:
    using TableFn = std::function<std::vector<double>(std::span<const double>)>;
    using DTableFn = std::function<std::vector<double>(std::span<const double>, int)>;

    FiniteMarkovModel(std::string id, Alphabet alphabet, int order,
                      std::vector<double> theta,
                      std::vector<std::array<double, 2>> theta_domain, TableFn table,
                      DTableFn dtable = nullptr)
        : id_(std::move(id)),
          alphabet_(alphabet),
          order_(order),
          theta_(std::move(theta)),
          theta_domain_(std::move(theta_domain)),
          table_fn_(std::move(table)),
          dtable_fn_(std::move(dtable)) {
        if (order_ < 0) throw ValidationError("Markov order must be non-negative");
        if (theta_.empty()) throw ValidationError("theta must have at least one component");
        if (theta_domain_.size() != theta_.size())
            throw ValidationError("theta_domain size mismatch");
        for (std::size_t i = 0; i < theta_.size(); ++i) {
            if (theta_[i] < theta_domain_[i][0] || theta_[i] > theta_domain_[i][1])
                throw ValidationError("theta outside theta_domain");
        }
        table_ = table_fn_(theta_);
        validate_table(table_);
    }

    const std::string& id() const { return id_; }
    const Alphabet& alphabet() const { return alphabet_; }
    int order() const { return order_; }
    std::span<const double> theta() const { return theta_; }
    std::span<const std::array<double, 2>> theta_domain() const { return theta_domain_; }
    int param_count() const { return static_cast<int>(theta_.size()); }
    bool has_analytic_derivatives() const { return static_cast<bool>(dtable_fn_); }

    std::size_t history_count() const {
        return checked_pow(static_cast<std::size_t>(alphabet_.size),
                           static_cast<unsigned>(order_), kDefaultEnumerationCap);
    }

    /// P(next = x | history h), h encoded base-d.
    double conditional(std::size_t history, int x) const {
        return table_[history * static_cast<std::size_t>(alphabet_.size) +
                      static_cast<std::size_t>(x)];
    }

    std::span<const double> table() const { return table_; }

    /// d table / d theta_i at the stored theta (analytic models only).
    std::vector<double> dtable(int i) const {
        if (!dtable_fn_) throw ValidationError(id_ + ": no analytic derivative table");
        return dtable_fn_(theta_, i);
    }

    /// Same family, new parameter point.
    FiniteMarkovModel with_theta(std::vector<double> theta) const {
        return FiniteMarkovModel(id_, alphabet_, order_, std::move(theta), theta_domain_,
                                 table_fn_, dtable_fn_);
    }

  private:
    void validate_table(const std::vector<double>& t) const {
        const std::size_t d = static_cast<std::size_t>(alphabet_.size);
        const std::size_t rows = history_count();
        if (t.size() != rows * d) throw ValidationError(id_ + ": conditional table shape");
        for (std::size_t h = 0; h < rows; ++h) {
            NeumaierSum s;
            for (std::size_t x = 0; x < d; ++x) {
                const double p = t[h * d + x];
                if (p < 0.0) throw ValidationError(id_ + ": negative conditional probability");
                s.add(p);
            }
            if (std::abs(s.value() - 1.0) > 1e-12)
                throw ValidationError(id_ + ": conditional row does not sum to 1");
        }
    }

    std::string id_;
    Alphabet alphabet_;
    int order_;
    std::vector<double> theta_;
    std::vector<std::array<double, 2>> theta_domain_;
    TableFn table_fn_;
    DTableFn dtable_fn_;
    std::vector<double> table_;
};

// ---------------------------------------------------------------------------
// Stationary distribution of the lifted history chain.
// ---------------------------------------------------------------------------

namespace detail {

/// Lifted transition: history h, next symbol x -> successor history.
inline std::size_t lifted_successor(std::size_t h, int x, int d, int order) {
    if (order == 0) return 0;
    std::size_t mod = 1;
    for (int i = 0; i < order - 1; ++i) mod *= static_cast<std::size_t>(d);
    return (h % mod) * static_cast<std::size_t>(d) + static_cast<std::size_t>(x);
}

/// Column-stochastic lifted transition matrix T[h'][h].
inline std::vector<double> lifted_matrix(const FiniteMarkovModel& model) {
    const int d = model.alphabet().size;
    const std::size_t k = model.history_count();
    std::vector<double> t(k * k, 0.0);
    for (std::size_t h = 0; h < k; ++h) {
        for (int x = 0; x < d; ++x) {
            const std::size_t h2 = lifted_successor(h, x, d, model.order());
            t[h2 * k + h] += model.conditional(h, x);
        }
    }
    return t;
}

/// Strong connectivity and aperiodicity of the positive-probability graph.
inline bool lifted_is_ergodic(const std::vector<double>& t, std::size_t k) {
    auto reach = [&](bool transpose) {
        std::vector<char> seen(k, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < k; ++v) {
                const double p = transpose ? t[u * k + v] : t[v * k + u];
                if (p > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        return seen;
    };
    const auto fwd = reach(false), bwd = reach(true);
    for (std::size_t i = 0; i < k; ++i) {
        if (!fwd[i] || !bwd[i]) return false;
    }
    // Period via BFS levels: gcd over edges of (depth(u) + 1 - depth(v)).
    std::vector<long long> depth(k, -1);
    std::vector<std::size_t> queue{0};
    depth[0] = 0;
    long long g = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const std::size_t u = queue[qi];
        for (std::size_t v = 0; v < k; ++v) {
            if (t[v * k + u] <= 0.0) continue;
            if (depth[v] < 0) {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            } else {
                g = std::gcd(g, std::abs(depth[u] + 1 - depth[v]));
            }
        }
    }
    return g == 1;
}

}  // namespace detail

/// Unique stationary distribution pi over length-M histories. Solved as the
/// unit-eigenvalue linear system, with power iteration as fallback.
inline WindowDistribution stationary_distribution(const FiniteMarkovModel& model) {
    WindowDistribution out;
    out.alphabet_size = model.alphabet().size;
    out.length = model.order();
    if (model.order() == 0) {
        out.probs = {1.0};
        return out;
    }
    const std::size_t k = model.history_count();
    const auto t = detail::lifted_matrix(model);
    if (!detail::lifted_is_ergodic(t, k)) {
        throw NonErgodicError(model.id() +
                              ": lifted history chain is reducible or periodic");
    }
    // (I - T) pi = 0 with the last row replaced by the normalization.
    std::vector<double> a(k * k);
    std::vector<double> b(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            a[i * k + j] = (i == j ? 1.0 : 0.0) - t[i * k + j];
    for (std::size_t j = 0; j < k; ++j) a[(k - 1) * k + j] = 1.0;
    b[k - 1] = 1.0;

    std::vector<double> pi;
    bool ok = true;
    try {
        pi = solve_linear(std::move(a), std::move(b));
    } catch (const NumericError&) {
        ok = false;
    }
    if (ok) {
        for (double& p : pi) {
            if (p < 0.0 && p > -1e-12) p = 0.0;
            if (p < 0.0) ok = false;
        }
    }
    if (ok) {
        // residual check ||T pi - pi||
        for (std::size_t i = 0; i < k && ok; ++i) {
            NeumaierSum s;
            for (std::size_t j = 0; j < k; ++j) s.add(t[i * k + j] * pi[j]);
            if (std::abs(s.value() - pi[i]) > 1e-10) ok = false;
        }
    }
    if (!ok) {
        // Power iteration fallback, tolerance 1e-14, capped iterations.
        pi.assign(k, 1.0 / static_cast<double>(k));
        std::vector<double> next(k);
        for (std::size_t it = 0; it < 1000000; ++it) {
            for (std::size_t i = 0; i < k; ++i) {
                NeumaierSum s;
                for (std::size_t j = 0; j < k; ++j) s.add(t[i * k + j] * pi[j]);
                next[i] = s.value();
            }
            double delta = 0.0, total = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                delta = std::max(delta, std::abs(next[i] - pi[i]));
                total += next[i];
            }
            for (std::size_t i = 0; i < k; ++i) pi[i] = next[i] / total;
            if (delta < 1e-14) break;
        }
    }
    NeumaierSum norm;
    for (double p : pi) norm.add(p);
    for (double& p : pi) p /= norm.value();
    out.probs = std::move(pi);
    return out;
}

/// Exact joint P(X_{1:n}) built by extending pi with conditional factors.
/// For n <= M the stationary history distribution is marginalized instead.
inline WindowDistribution window_distribution(const FiniteMarkovModel& model, int n,
                                              std::size_t cap = kDefaultEnumerationCap) {
    if (n < 0) throw ValidationError("window length must be non-negative");
    const int d = model.alphabet().size;
    const int m = model.order();
    checked_pow(static_cast<std::size_t>(d), static_cast<unsigned>(n), cap);
    WindowDistribution win = stationary_distribution(model);
    if (n <= m) {
        while (win.length > n) win = win.marginalize_last();
        return win;
    }
    const std::size_t dd = static_cast<std::size_t>(d);
    std::size_t hist_mod = 1;  // d^{M-1} (unused when M == 0)
    for (int i = 0; i < m - 1; ++i) hist_mod *= dd;
    for (int len = m; len < n; ++len) {
        WindowDistribution next;
        next.alphabet_size = d;
        next.length = len + 1;
        next.probs.assign(win.probs.size() * dd, 0.0);
        // history of the last M symbols of index i
        std::size_t hmask = 1;
        for (int i = 0; i < m; ++i) hmask *= dd;
        for (std::size_t i = 0; i < win.probs.size(); ++i) {
            const double p = win.probs[i];
            const std::size_t h = (m == 0) ? 0 : i % hmask;
            for (std::size_t x = 0; x < dd; ++x) {
                next.probs[i * dd + x] = p * model.conditional(h, static_cast<int>(x));
            }
        }
        win = std::move(next);
    }
    return win;
}

// ---------------------------------------------------------------------------
// Markov-order verification.
// ---------------------------------------------------------------------------

struct MarkovOrderCheck {
    bool passed = false;
    double max_deviation = 0.0;        // at the claimed order
    double minimality_deviation = 0.0; // at claimed order - 1 (must exceed tol)
};

namespace detail {

/// Max over histories (with weight > null_cutoff) and depths n in
/// (claimed, probe_depth] of |P(x|full history) - P(x|last `claimed`)|.
/// windows[i] must hold the (i+1)-window, i = 0..probe_depth.
inline double conditional_truncation_deviation(const std::vector<WindowDistribution>& windows,
                                               int claimed, int probe_depth,
                                               double null_cutoff = 1e-12) {
    double worst = 0.0;
    const std::size_t d = static_cast<std::size_t>(windows[0].alphabet_size);
    for (int n = claimed + 1; n <= probe_depth; ++n) {
        const auto& full = windows[static_cast<std::size_t>(n)];      // (n+1)-window
        const auto& hist = windows[static_cast<std::size_t>(n) - 1];  // n-window
        const auto& tr_full = windows[static_cast<std::size_t>(claimed)];  // (claimed+1)-window
        std::size_t tail_mod = 1;
        for (int i = 0; i < claimed; ++i) tail_mod *= d;
        for (std::size_t h = 0; h < hist.probs.size(); ++h) {
            const double ph = hist.probs[h];
            if (ph <= null_cutoff) continue;
            const std::size_t tail = h % tail_mod;
            double ptail = 0.0;
            if (claimed == 0) {
                ptail = 1.0;
            } else {
                const auto& tail_win = windows[static_cast<std::size_t>(claimed) - 1];
                ptail = tail_win.probs[tail];
            }
            if (ptail <= null_cutoff) continue;
            for (std::size_t x = 0; x < d; ++x) {
                const double full_cond = full.probs[h * d + x] / ph;
                const double trunc_cond = tr_full.probs[tail * d + x] / ptail;
                worst = std::max(worst, std::abs(full_cond - trunc_cond));
            }
        }
    }
    return worst;
}

}  // namespace detail

/// True iff conditionals truncate at claimed_M (within tol) for every depth
/// up to probe_depth, and claimed_M - 1 fails the same test (minimality).
inline MarkovOrderCheck verify_markov_order(const FiniteMarkovModel& model, int claimed_M,
                                            int probe_depth, double tol,
                                            std::size_t cap = kDefaultEnumerationCap) {
    if (claimed_M < 0) throw ValidationError("claimed Markov order must be non-negative");
    if (probe_depth < claimed_M + 1)
        throw ValidationError("probe_depth must be at least claimed_M + 1");
    std::vector<WindowDistribution> windows;
    windows.reserve(static_cast<std::size_t>(probe_depth) + 1);
    for (int n = 1; n <= probe_depth + 1; ++n)
        windows.push_back(window_distribution(model, n, cap));
    MarkovOrderCheck out;
    out.max_deviation =
        detail::conditional_truncation_deviation(windows, claimed_M, probe_depth);
    out.passed = out.max_deviation <= tol;
    if (claimed_M >= 1) {
        out.minimality_deviation =
            detail::conditional_truncation_deviation(windows, claimed_M - 1, probe_depth);
        if (out.minimality_deviation <= tol) out.passed = false;  // not minimal
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entropy rate, excess entropy and the linear growth law.
// ---------------------------------------------------------------------------

struct EntropyReport {
    double entropy_rate = 0.0;    // h, nats
    double excess_entropy = 0.0;  // E, nats
    std::vector<double> joint_entropies;  // H(X_{1:n}), n = 1..n_max
    double max_linear_residual = 0.0;     // max_n |H_n - n h - E| for n >= M
};

inline EntropyReport entropy_report(const FiniteMarkovModel& model, int n_max,
                                    std::size_t cap = kDefaultEnumerationCap) {
    const int m = model.order();
    if (n_max < m + 2) throw ValidationError("entropy_report requires n_max >= M + 2");
    EntropyReport rep;
    std::vector<double> H(static_cast<std::size_t>(n_max) + 1, 0.0);  // H[0] = 0
    for (int n = 1; n <= n_max; ++n)
        H[static_cast<std::size_t>(n)] = window_distribution(model, n, cap).entropy();
    rep.joint_entropies.assign(H.begin() + 1, H.end());
    rep.entropy_rate = H[static_cast<std::size_t>(m) + 1] - H[static_cast<std::size_t>(m)];
    rep.excess_entropy = H[static_cast<std::size_t>(m)] -
                         static_cast<double>(m) * rep.entropy_rate;
    for (int n = std::max(m, 1); n <= n_max; ++n) {
        const double resid = std::abs(H[static_cast<std::size_t>(n)] -
                                      static_cast<double>(n) * rep.entropy_rate -
                                      rep.excess_entropy);
        rep.max_linear_residual = std::max(rep.max_linear_residual, resid);
    }
    return rep;
}

}  // namespace fim

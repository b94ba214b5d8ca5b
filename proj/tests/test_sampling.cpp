#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fim/models.hpp"
#include "fim/sampling.hpp"

using namespace fim;

namespace {

double mean(const std::vector<double>& v) {
    NeumaierSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
}

/// Empirical lag-k covariance.
double lag_cov(const std::vector<double>& v, int k) {
    const double m = mean(v);
    NeumaierSum s;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) < v.size(); ++i)
        s.add((v[i] - m) * (v[i + static_cast<std::size_t>(k)] - m));
    return s.value() / static_cast<double>(v.size() - static_cast<std::size_t>(k));
}

}  // namespace

TEST_CASE("sample_finite") {
    SECTION("fixed seed twice gives identical trajectories") {
        const auto model = make_toy_sub(0.5);
        const auto a = sample_finite(model, 5000, 42);
        const auto b = sample_finite(model, 5000, 42);
        CHECK(a.values == b.values);
        const auto c = sample_finite(model, 5000, 43);
        CHECK(a.values != c.values);
    }
    SECTION("length-N draw is a prefix of a longer draw with the same seed") {
        const auto model = make_toy_super(0.4);
        const auto a = sample_finite(model, 1000, 7);
        const auto b = sample_finite(model, 2000, 7);
        CHECK(std::equal(a.values.begin(), a.values.end(), b.values.begin()));
    }
    SECTION("degenerate Bernoulli(1.0) emits all ones") {
        const auto t = sample_finite(make_iid_bernoulli(1.0), 100, 1);
        for (int v : t.values) CHECK(v == 1);
    }
    SECTION("empirical 2-grams match the exact window at length 1e6") {
        const auto model = make_toy_sub(0.5);
        const auto t = sample_finite(model, 1000000, 12345);
        const auto w2 = window_distribution(model, 2);
        double counts[4] = {0, 0, 0, 0};
        for (std::size_t i = 0; i + 1 < t.values.size(); ++i)
            counts[2 * t.values[i] + t.values[i + 1]] += 1.0;
        const double total = static_cast<double>(t.values.size() - 1);
        const double bound = 3.0 / std::sqrt(1e6);
        for (int k = 0; k < 4; ++k) {
            CHECK(std::abs(counts[k] / total - w2.probs[static_cast<std::size_t>(k)]) <=
                  bound);
        }
    }
    SECTION("strided bigram chi-square below the 0.999 quantile") {
        // stride decorrelates the bigrams so the chi-square reference applies
        const auto model = make_toy_super(0.5);
        const auto t = sample_finite(model, 1000000, 2024);
        const auto w2 = window_distribution(model, 2);
        double counts[4] = {0, 0, 0, 0};
        double n = 0;
        for (std::size_t i = 0; i + 1 < t.values.size(); i += 10) {
            counts[2 * t.values[i] + t.values[i + 1]] += 1.0;
            n += 1.0;
        }
        double chi2 = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double expected = n * w2.probs[static_cast<std::size_t>(k)];
            chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
        }
        CHECK(chi2 < 16.266);  // chi-square(3), 0.999 quantile
    }
}

TEST_CASE("sample_gaussian") {
    SECTION("rho = 0: iid normals, lag-1 covariance near zero") {
        const GaussianMarkovModel model(0.0, 1.0, 0.0);
        const auto t = sample_gaussian(model, 1000000, 99);
        CHECK(std::abs(lag_cov(t.values, 1)) <= 4.0 / std::sqrt(1e6));
        CHECK(std::abs(lag_cov(t.values, 0) - 1.0) <= 5.0 / std::sqrt(1e6));
    }
    SECTION("rho = -0.9: lag-2 covariance near rho^2 gamma0 = 0.81") {
        const GaussianMarkovModel model(0.0, 1.0, -0.9);
        const auto t = sample_gaussian(model, 1000000, 7);
        CHECK(lag_cov(t.values, 2) == Catch::Approx(0.81).margin(0.02));
    }
    SECTION("rho = 1: constant after the first draw") {
        const GaussianMarkovModel model(2.0, 1.0, 1.0);
        const auto t = sample_gaussian(model, 50, 3);
        for (double v : t.values) CHECK(v == Catch::Approx(t.values[0]));
    }
    SECTION("covariance decay C_k/C_0 = rho^k for k <= 5") {
        const GaussianMarkovModel model(1.0, 1.0, 0.6);
        const auto t = sample_gaussian(model, 1000000, 11);
        const double c0 = lag_cov(t.values, 0);
        for (int k = 1; k <= 5; ++k) {
            CHECK(lag_cov(t.values, k) / c0 ==
                  Catch::Approx(std::pow(0.6, k)).margin(5.0 / std::sqrt(1e6) * 5.0));
        }
    }
    SECTION("deterministic given seed") {
        const GaussianMarkovModel model(0.0, 1.0, 0.5);
        const auto a = sample_gaussian(model, 1000, 5);
        const auto b = sample_gaussian(model, 1000, 5);
        CHECK(a.values == b.values);
    }
}

TEST_CASE("standardized sample mean is approximately normal") {
    // surrogate for the central limit behaviour of mixing chains: skewness
    // and excess kurtosis of 2000 replica means at N = 1e4, Jarque-Bera
    // style statistic below the chi-square(2) 0.999 quantile (13.8155)
    auto jarque_bera = [](const std::vector<double>& means) {
        const std::size_t n = means.size();
        double m = 0.0;
        for (double v : means) m += v;
        m /= static_cast<double>(n);
        double m2 = 0, m3 = 0, m4 = 0;
        for (double v : means) {
            const double d = v - m;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= static_cast<double>(n);
        m3 /= static_cast<double>(n);
        m4 /= static_cast<double>(n);
        const double skew = m3 / std::pow(m2, 1.5);
        const double kurt = m4 / (m2 * m2) - 3.0;
        return static_cast<double>(n) * (skew * skew / 6.0 + kurt * kurt / 24.0);
    };

    SECTION("gaussian chain") {
        const GaussianMarkovModel model(1.0, 1.0, 0.5);
        std::vector<double> means;
        for (int r = 0; r < 2000; ++r) {
            const auto t = sample_gaussian(model, 10000, 900 + static_cast<std::uint64_t>(r));
            means.push_back(mean(t.values));
        }
        CHECK(jarque_bera(means) < 13.8155);
    }
    SECTION("finite toy chains") {
        for (const auto& model : {make_toy_sub(0.5), make_toy_super(0.5)}) {
            std::vector<double> means;
            for (int r = 0; r < 2000; ++r) {
                const auto t = sample_finite(model, 10000, 4000 + static_cast<std::uint64_t>(r));
                double s = 0.0;
                for (int v : t.values) s += v;
                means.push_back(s / static_cast<double>(t.values.size()));
            }
            CHECK(jarque_bera(means) < 13.8155);
        }
    }
}

TEST_CASE("trivariate Gaussian conditional checks") {
    SECTION("tridiagonal covariance: X1 coefficient is -rho^2/(1-rho^2)") {
        for (double rho : {0.3, 0.5, -0.6}) {
            const double got = tridiagonal_gaussian_conditional_check(rho, 1.0);
            CHECK(got == Catch::Approx(-rho * rho / (1.0 - rho * rho)).margin(1e-12));
        }
        CHECK(tridiagonal_gaussian_conditional_check(0.5, 1.0) != 0.0);
    }
    SECTION("rho = 0 is fully independent") {
        CHECK(tridiagonal_gaussian_conditional_check(0.0, 1.0) == Catch::Approx(0.0));
    }
    SECTION("rho^|i-j| covariance has zero X1 coefficient") {
        for (double rho : {0.3, 0.5, 0.9, -0.7}) {
            CHECK(std::abs(markov_gaussian_conditional_check(rho, 2.0)) <= 1e-12);
        }
    }
    SECTION("positive definiteness limit at |rho| = 1/sqrt(2)") {
        CHECK_THROWS_AS(tridiagonal_gaussian_conditional_check(0.75, 1.0),
                        NotPositiveDefiniteError);
        CHECK_NOTHROW(tridiagonal_gaussian_conditional_check(0.7, 1.0));
    }
}

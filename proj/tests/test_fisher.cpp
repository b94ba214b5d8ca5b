#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fim/fisher.hpp"
#include "fim/models.hpp"
#include "support.hpp"

using namespace fim;

namespace {

const DerivativeScheme kAnalytic = DerivativeScheme::analytic();
const DerivativeScheme kCentral = DerivativeScheme::central(1e-5, false);

// Quadrature oracle: mean-estimation Fisher information of a bivariate
// Gaussian with common mean, computed by trapezoid integration of
// p (d_mu log p)^2 on a wide fine grid. Independent of the closed form.
double gaussian_pair_fisher_quadrature(double gamma0, double rho) {
    const double det = gamma0 * gamma0 * (1.0 - rho * rho);
    const double s = std::sqrt(gamma0);
    const int n = 600;
    const double lim = 8.0 * s;
    const double step = 2.0 * lim / n;
    // precision matrix of [[g, g rho], [g rho, g]]
    const double a = gamma0 / det, b = -gamma0 * rho / det;
    double fi = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = -lim + i * step;
        for (int j = 0; j <= n; ++j) {
            const double y = -lim + j * step;
            const double quad = a * (x * x + y * y) + 2.0 * b * x * y;
            const double p = std::exp(-0.5 * quad) / (2.0 * M_PI * std::sqrt(det));
            // d/dmu log p at mu = 0: sum of precision-matrix row sums times x
            const double score = (a + b) * (x + y);
            const double w = ((i == 0 || i == n) ? 0.5 : 1.0) *
                             ((j == 0 || j == n) ? 0.5 : 1.0);
            fi += w * p * score * score * step * step;
        }
    }
    return fi;
}

}  // namespace

TEST_CASE("joint_fisher on iid Bernoulli") {
    SECTION("N = 1: F1 = 1/(theta(1-theta))") {
        const auto f = joint_fisher(make_iid_bernoulli(0.3), 1, kAnalytic);
        CHECK(f.scalar() == Catch::Approx(1.0 / (0.3 * 0.7)).epsilon(1e-12));
        CHECK(f.scalar() == Catch::Approx(4.7619).margin(1e-4));
    }
    SECTION("N = 5: additivity F = 5 F1") {
        const auto f = joint_fisher(make_iid_bernoulli(0.3), 5, kAnalytic);
        CHECK(f.scalar() == Catch::Approx(5.0 / (0.3 * 0.7)).epsilon(1e-12));
    }
    SECTION("central differences agree to 1e-6 relative") {
        const auto fa = joint_fisher(make_iid_bernoulli(0.3), 3, kAnalytic);
        const auto fc = joint_fisher(make_iid_bernoulli(0.3), 3, kCentral);
        CHECK(fc.scalar() == Catch::Approx(fa.scalar()).epsilon(1e-6));
    }
}

TEST_CASE("theta-independent conditionals give zero Fisher information") {
    const auto f = joint_fisher(testsupport::make_frozen_chain(), 4, kAnalytic);
    CHECK(f.max_abs() <= 1e-15);
    const auto fc = joint_fisher(testsupport::make_frozen_chain(), 4, kCentral);
    CHECK(fc.max_abs() <= 1e-12);
}

TEST_CASE("analytic and central-difference scores agree on all builtins") {
    for (const auto& model :
         {make_iid_bernoulli(0.3), make_toy_sub(0.5), make_toy_super(0.5)}) {
        const auto fa = joint_fisher(model, 4, kAnalytic);
        const auto fc = joint_fisher(model, 4, kCentral);
        CHECK(fc.scalar() == Catch::Approx(fa.scalar()).epsilon(1e-6));
    }
}

TEST_CASE("chain rule: joint(N) = joint(N-1) + conditional(N)") {
    SECTION("scalar models up to N = 6") {
        for (const auto& model :
             {make_iid_bernoulli(0.4), make_toy_sub(0.5), make_toy_super(0.3)}) {
            for (int n = 2; n <= 6; ++n) {
                const auto lhs = joint_fisher(model, n, kAnalytic);
                const auto rhs = joint_fisher(model, n - 1, kAnalytic) +
                                 conditional_fisher(model, n, kAnalytic);
                CHECK(lhs.max_abs_diff(rhs) <= 1e-8);
            }
        }
    }
    SECTION("two-parameter model: matrix-valued identity") {
        const auto model = testsupport::make_two_param_chain(0.6, 0.35);
        for (int n = 2; n <= 5; ++n) {
            const auto lhs = joint_fisher(model, n, kAnalytic);
            const auto rhs = joint_fisher(model, n - 1, kAnalytic) +
                             conditional_fisher(model, n, kAnalytic);
            REQUIRE(lhs.dim == 2);
            CHECK(lhs.max_abs_diff(rhs) <= 1e-8);
            CHECK(lhs.asymmetry() <= 1e-10);
            CHECK(lhs.min_eigenvalue() >= -1e-9);
        }
    }
    SECTION("monotonicity: joint(N) - joint(N-1) is PSD") {
        const auto model = testsupport::make_two_param_chain(0.55, 0.42);
        for (int n = 2; n <= 5; ++n) {
            const auto diff = joint_fisher(model, n, kAnalytic) -
                              joint_fisher(model, n - 1, kAnalytic);
            CHECK(diff.min_eigenvalue() >= -1e-9);
        }
    }
}

TEST_CASE("conditional Fisher information") {
    SECTION("iid: F_{k|1:k-1} = F1 for every k") {
        const auto model = make_iid_bernoulli(0.3);
        const double f1 = joint_fisher(model, 1, kAnalytic).scalar();
        for (int k = 2; k <= 5; ++k) {
            CHECK(conditional_fisher(model, k, kAnalytic).scalar() ==
                  Catch::Approx(f1).epsilon(1e-12));
        }
    }
    SECTION("rate stabilization: constant for k > M") {
        for (const auto& model : {make_toy_sub(0.5), make_toy_super(0.7)}) {
            const double f = conditional_fisher(model, 2, kAnalytic).scalar();
            for (int k = 3; k <= 6; ++k) {
                CHECK(conditional_fisher(model, k, kAnalytic).scalar() ==
                      Catch::Approx(f).margin(1e-8));
            }
        }
    }
    SECTION("toy-sub at 0.5: conditional strictly below F1 (sub-additive)") {
        const auto model = make_toy_sub(0.5);
        const double f1 = joint_fisher(model, 1, kAnalytic).scalar();
        const double f21 = conditional_fisher(model, 2, kAnalytic).scalar();
        CHECK(f21 < f1);
    }
    SECTION("matches joint(k) - joint(k-1)") {
        for (const auto& model : {make_toy_sub(0.45), make_toy_super(0.6)}) {
            for (int k = 2; k <= 5; ++k) {
                const double direct = conditional_fisher(model, k, kAnalytic).scalar();
                const double diff = joint_fisher(model, k, kAnalytic).scalar() -
                                    joint_fisher(model, k - 1, kAnalytic).scalar();
                CHECK(direct == Catch::Approx(diff).margin(1e-8));
            }
        }
    }
}

TEST_CASE("markov_decomposition") {
    SECTION("M = 1 identities: f = F12 - F1, eps = 2 F1 - F12") {
        const auto model = make_toy_sub(0.5);
        const auto rep = markov_decomposition(model, 6, kAnalytic);
        const double f12 = joint_fisher(model, 2, kAnalytic).scalar();
        const double f1 = rep.F1.scalar();
        CHECK(rep.rate.scalar() == Catch::Approx(f12 - f1).margin(1e-10));
        CHECK(rep.excess.scalar() == Catch::Approx(2.0 * f1 - f12).margin(1e-10));
        CHECK(rep.decomposition_residual <= 1e-8);
    }
    SECTION("iid: f = F1, eps = 0") {
        const auto rep = markov_decomposition(make_iid_bernoulli(0.3), 5, kAnalytic);
        CHECK(rep.rate.scalar() == Catch::Approx(rep.F1.scalar()).epsilon(1e-12));
        CHECK(std::abs(rep.excess.scalar()) <= 1e-12);
    }
    SECTION("excess signs: toy-super negative, toy-sub positive") {
        CHECK(markov_decomposition(make_toy_super(0.7), 4, kAnalytic).excess.scalar() < 0.0);
        CHECK(markov_decomposition(make_toy_sub(0.7), 4, kAnalytic).excess.scalar() > 0.0);
    }
    SECTION("joint equals F1 plus the sum of conditional terms") {
        const auto rep = markov_decomposition(make_toy_super(0.5), 6, kAnalytic);
        double total = rep.F1.scalar();
        for (const auto& t : rep.conditional_terms) total += t.scalar();
        CHECK(total == Catch::Approx(rep.F_joint.scalar()).margin(1e-8));
    }
    SECTION("central differences keep the residual below 1e-5") {
        for (const auto& model : {make_toy_sub(0.5), make_toy_super(0.5)}) {
            const auto rep = markov_decomposition(model, 6, kCentral);
            CHECK(rep.decomposition_residual <= 1e-5);
        }
    }
    SECTION("xi is reported in the scalar case") {
        const auto rep = markov_decomposition(make_toy_sub(0.5), 3, kAnalytic);
        REQUIRE(rep.xi.has_value());
        const double f12 = rep.F1.scalar() + rep.conditional_terms.front().scalar();
        CHECK(rep.xi->value == Catch::Approx(f12 / (2.0 * rep.F1.scalar())).epsilon(1e-12));
    }
}

TEST_CASE("central-difference boundary guard") {
    // theta = 1 - 1e-6 leaves less than 2h of room at step 1e-5
    CHECK_THROWS_AS(joint_fisher(make_iid_bernoulli(1.0 - 1e-6), 2, kCentral),
                    BoundaryThetaError);
}

TEST_CASE("gaussian_pair_fisher") {
    SECTION("independence: F_joint = 2/gamma0, ratio = 1") {
        const auto g = gaussian_pair_fisher(0.0, 1.0, 0.0);
        CHECK(g.joint == Catch::Approx(2.0).epsilon(1e-15));
        CHECK(g.marginal == Catch::Approx(1.0).epsilon(1e-15));
        CHECK(g.ratio == Catch::Approx(1.0).epsilon(1e-15));
    }
    SECTION("perfect correlation: F_joint = F_marginal") {
        const auto g = gaussian_pair_fisher(0.0, 1.0, 1.0);
        CHECK(g.joint == Catch::Approx(g.marginal).epsilon(1e-15));
    }
    SECTION("gamma0 = 2, rho = -0.5: F_joint = 2, ratio = 2") {
        const auto g = gaussian_pair_fisher(0.0, 2.0, -0.5);
        CHECK(g.joint == Catch::Approx(2.0).epsilon(1e-15));
        CHECK(g.ratio == Catch::Approx(2.0).epsilon(1e-15));
    }
    SECTION("quadrature oracle confirms the closed form") {
        for (double rho : {-0.5, 0.0, 0.6}) {
            const double oracle = gaussian_pair_fisher_quadrature(1.0, rho);
            const auto g = gaussian_pair_fisher(0.0, 1.0, rho);
            CHECK(g.joint == Catch::Approx(oracle).epsilon(1e-6));
        }
    }
    SECTION("rho = -1 is singular") {
        CHECK_THROWS_AS(gaussian_pair_fisher(0.0, 1.0, -1.0), SingularCovarianceError);
    }
}

TEST_CASE("sample_mean_fisher") {
    SECTION("uncorrelated: F_Y = N / sigma^2") {
        const std::vector<double> zeros(99, 0.0);
        const auto r = sample_mean_fisher(2.0, zeros, 1.0, 100);
        CHECK(r.fisher == Catch::Approx(50.0).epsilon(1e-15));
        CHECK(r.exact_variance == Catch::Approx(0.02).epsilon(1e-15));
    }
    SECTION("geometric covariances, rho = -0.5: F_Y -> 3N") {
        const long long n = 100000;
        std::vector<double> covs;
        for (int i = 1; i <= 200; ++i) covs.push_back(std::pow(-0.5, i));
        const auto r = sample_mean_fisher(1.0, covs, 1.0, n);
        // oracle: geometric series, denominator -> 1 + 2 rho/(1-rho) = 1/3
        CHECK(r.fisher == Catch::Approx(3.0 * static_cast<double>(n)).epsilon(1e-9));
    }
    SECTION("geometric covariances, rho = +0.5: F_Y -> N/3") {
        const long long n = 100000;
        std::vector<double> covs;
        for (int i = 1; i <= 200; ++i) covs.push_back(std::pow(0.5, i));
        const auto r = sample_mean_fisher(1.0, covs, 1.0, n);
        CHECK(r.fisher == Catch::Approx(static_cast<double>(n) / 3.0).epsilon(1e-9));
    }
    SECTION("non-positive asymptotic variance is rejected") {
        const std::vector<double> covs{-0.6};
        CHECK_THROWS_AS(sample_mean_fisher(1.0, covs, 1.0, 10), InvalidVarianceError);
    }
    SECTION("F_Y/N never exceeds the rate f for the AR(1) chain") {
        // f = F_{1:2} - F_1 from the pair closed forms at matched parameters
        const long long n = 10000;
        for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
            const auto pair = gaussian_pair_fisher(1.0, 1.0, rho);
            const double f = pair.joint - pair.marginal;
            std::vector<double> covs;
            for (int i = 1; i <= 400; ++i) covs.push_back(std::pow(rho, i));
            const auto r = sample_mean_fisher(1.0, covs, 1.0, n);
            CHECK(r.fisher / static_cast<double>(n) <= f + 1e-9);
        }
    }
}

TEST_CASE("xi_ratio") {
    SECTION("independent pair: xi = 1") {
        const auto x = xi_ratio(2.0, 1.0);
        CHECK_FALSE(x.diverged);
        CHECK(x.value == Catch::Approx(1.0));
    }
    SECTION("F1 = 0 with F12 > 0 diverges") {
        const auto x = xi_ratio(0.5, 0.0);
        CHECK(x.diverged);
        CHECK(std::isinf(x.value));
    }
    SECTION("F12 = 2, F1 = 2 gives 0.5") {
        CHECK(xi_ratio(2.0, 2.0).value == Catch::Approx(0.5));
    }
    SECTION("both zero is indeterminate") {
        CHECK_THROWS_AS(xi_ratio(0.0, 0.0), IndeterminateError);
    }
    SECTION("negative input is rejected") {
        CHECK_THROWS_AS(xi_ratio(-1.0, 1.0), ValidationError);
    }
}

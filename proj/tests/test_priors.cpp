#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "robustlr/errors.hpp"
#include "robustlr/priors.hpp"
#include "robustlr/quadrature.hpp"

using robustlr::InvalidInput;
using robustlr::heavytail::CoefficientPrior;
using robustlr::heavytail::ScalePrior;
using robustlr::heavytail::scale_moment_check;
using robustlr::heavytail::verify_prior_bound;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) x[i++] = e;
    return x;
}
} // namespace

TEST_CASE("per-coordinate t pdf pinned values") {
    auto cp1 = CoefficientPrior::per_coordinate_t(vec({1.0}));
    CHECK(cp1.pdf(vec({0.0}), 1.0) == doctest::Approx(0.5).epsilon(1e-14));

    auto cp2 = CoefficientPrior::per_coordinate_t(vec({1.0, 1.0}));
    CHECK(cp2.pdf(vec({0.0, 0.0}), 2.0) == doctest::Approx(1.0 / 16).epsilon(1e-14));

    CHECK_THROWS_AS(cp2.pdf(vec({0.0}), 1.0), InvalidInput);
    CHECK_THROWS_AS(cp2.pdf(vec({0.0, 0.0}), 0.0), InvalidInput);
    CHECK_THROWS_AS(CoefficientPrior::per_coordinate_t(vec({1.0, -2.0})), InvalidInput);
}

TEST_CASE("per-coordinate t integrates to 1 over beta") {
    // 1-D slices; the joint factorizes by construction
    for (auto [nu, sigma] : {std::pair{2.0, 3.0}, {0.7, 0.2}, {1.0, 1.0}}) {
        auto cp = CoefficientPrior::per_coordinate_t(vec({nu}));
        auto f = [&](double b) { return cp.pdf(vec({b}), sigma); };
        const double r = 3e5 * sigma;
        const double q = robustlr::quad::integrate(f, -r, r, 1e-12);
        const double tail = std::pow(1.0 + r / sigma, -nu);  // exact

        CHECK(q + tail == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("multivariate t integrates to 1 over beta (p <= 3)") {
    // radial reduction: the density depends on r = |beta/sigma| only
    const double surf[3] = {2.0, 2 * std::numbers::pi, 4 * std::numbers::pi};
    for (int p = 1; p <= 3; ++p) {
        for (double nu : {1.0, 2.0, 3.5}) {
            auto cp = CoefficientPrior::multivariate_t(p, nu);
            const double sigma = 1.7;
            auto fr = [&](double r) {
                Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
                beta[0] = r;
                return cp.pdf(beta, sigma) * std::pow(r, p - 1);
            };
            const double R = 1e6 * sigma;
            const double q = surf[p - 1] * robustlr::quad::integrate(fr, 0.0, R, 1e-10);
            CHECK(q == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("prior bound certificate: per-coordinate exact pair") {
    auto cert = verify_prior_bound(CoefficientPrior::per_coordinate_t(vec({1.0, 2.0})));
    CHECK(cert.certified);
    CHECK(cert.exact);
    CHECK(cert.m == doctest::Approx(0.5).epsilon(1e-15));  // (1/2)(2/2)
    CHECK(cert.nu_star == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("prior bound certificate: multivariate t") {
    // p = 1, nu = 1 is Cauchy; sup ratio = (1/pi)(1+|b|)^2/(1+b^2) at b = 1
    auto c1 = verify_prior_bound(CoefficientPrior::multivariate_t(1, 1.0));
    CHECK(c1.certified);
    CHECK(c1.nu_star == doctest::Approx(1.0));
    CHECK(c1.m == doctest::Approx(2.0 / std::numbers::pi).epsilon(1e-3));

    auto c2 = verify_prior_bound(CoefficientPrior::multivariate_t(2, 2.0));
    CHECK(c2.certified);
    CHECK(c2.nu_star == doctest::Approx(1.0));
    CHECK(c2.m > 0.1);
    CHECK(c2.m < 10.0);

    // the certificate dominates the density on random points
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ulog(-5.0, 5.0);
    auto cp = CoefficientPrior::multivariate_t(2, 2.0);
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd beta(2);
        beta << g(rng), g(rng);
        beta *= std::pow(10.0, ulog(rng));
        const double sigma = std::pow(10.0, ulog(rng) / 2);
        double dom = std::log(c2.m);
        for (int k = 0; k < 2; ++k)
            dom += -std::log(sigma) -
                   (1 + c2.nu_star) * std::log1p(std::fabs(beta[k]) / sigma);
        CHECK(cp.log_pdf(beta, sigma) <= dom + 1e-9);
    }
}

TEST_CASE("scale prior densities: pinned values and properness") {
    auto hc = ScalePrior::half_cauchy(1.0);
    CHECK(hc.pdf(1.0) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-13));
    auto ig = ScalePrior::inverse_gamma(2.0, 1.0);
    CHECK(ig.pdf(1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
    auto ln = ScalePrior::log_normal(0.0, 1.0);
    CHECK(ln.pdf(1.0) ==
          doctest::Approx(1.0 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-13));

    for (const auto& sp : {hc, ig, ln}) {
        double total = 0.0;
        for (int k = -40; k < 60; ++k)
            total += robustlr::quad::integrate(
                [&](double s) { return sp.pdf(s); }, std::ldexp(1.0, k),
                std::ldexp(1.0, k + 1), 1e-11);
        // half-Cauchy tail above 2^60 is ~ 2/(pi 2^60); others smaller
        CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    }
    CHECK(hc.pdf(0.0) == 0.0);  // log_pdf -inf at the boundary
    CHECK_THROWS_AS(ScalePrior::half_cauchy(-1.0), InvalidInput);
    CHECK_THROWS_AS(ScalePrior::inverse_gamma(0.0, 1.0), InvalidInput);
}

TEST_CASE("scale moment check: analytic rule, numeric agreement, closed forms") {
    // E sigma^0.5 for half-Cauchy(1) = (2/pi) * (pi/2)/sin(3pi/4) = sqrt(2)
    auto r1 = scale_moment_check(ScalePrior::half_cauchy(1.0), 0.5);
    CHECK(r1.finite());
    CHECK(r1.consistent());
    CHECK(r1.estimate == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-3));

    auto r2 = scale_moment_check(ScalePrior::half_cauchy(1.0), 1.5);
    CHECK_FALSE(r2.finite());
    CHECK(r2.consistent());

    // log-normal(0,1): E sigma^3 = exp(9/2)
    auto r3 = scale_moment_check(ScalePrior::log_normal(0.0, 1.0), 3.0);
    CHECK(r3.finite());
    CHECK(r3.consistent());
    CHECK(r3.estimate == doctest::Approx(1.0 + std::exp(4.5)).epsilon(1e-6));

    // inverse-gamma(2,1): E sigma^1.5 = Gamma(0.5)/Gamma(2) = sqrt(pi)
    auto r4 = scale_moment_check(ScalePrior::inverse_gamma(2.0, 1.0), 1.5);
    CHECK(r4.finite());
    CHECK(r4.consistent());
    CHECK(r4.estimate == doctest::Approx(1.0 + std::sqrt(std::numbers::pi)).epsilon(1e-6));

    auto r5 = scale_moment_check(ScalePrior::inverse_gamma(2.0, 1.0), 2.5);
    CHECK_FALSE(r5.finite());
    CHECK(r5.consistent());

    // boundary rho = a: infinite, octave integrals go flat
    auto r6 = scale_moment_check(ScalePrior::inverse_gamma(2.0, 1.0), 2.0);
    CHECK_FALSE(r6.finite());
    CHECK(r6.consistent());

    CHECK_THROWS_AS(scale_moment_check(ScalePrior::half_cauchy(1.0), 0.0),
                    InvalidInput);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "robustlr/errors.hpp"
#include "robustlr/robustness.hpp"

using namespace robustlr;
using robustness::EvalPoint;
using robustness::SweepMethod;
using robustness::SweepOptions;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) x[i++] = e;
    return x;
}

const posterior::GridResolution kFast = posterior::GridResolution{}.scaled(0.35);

SweepOptions fast_grid_options() {
    SweepOptions opt;
    opt.resolution = kFast;
    return opt;
}

} // namespace

TEST_CASE("envelope formula and monotone decay") {
    const auto prob = model::canonical_problem();
    // |L| log w + |L|(1+g) log log w - (|K|-p+1) log w, here 1,2,4
    const double lw = std::log(1e4);
    CHECK(robustness::log_envelope(prob, 1e4) ==
          doctest::Approx(lw + 2 * std::log(lw) - 4 * lw).epsilon(1e-12));
    // strictly decreasing once log w > |L|(1+g)/(|K|-p+1-|L|) = 2/3
    double prev = robustness::log_envelope(prob, 2.0);
    for (double w = 2.5; w < 1e6; w *= 1.4) {
        const double cur = robustness::log_envelope(prob, w);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(robustness::log_envelope(prob, 1.0), InvalidInput);
}

TEST_CASE("default eval points: 3x3 layout for p = 1") {
    const auto prob = model::canonical_problem();
    const auto g = posterior::grid_posterior(prob, 100.0, prob.inliers, kFast);
    const auto pts = robustness::default_eval_points(prob, g);
    CHECK(pts.size() == 9);
    const auto s = g.summarize();
    int at_center = 0;
    for (const auto& pt : pts) {
        CHECK(pt.sigma > 0);
        if (pt.beta[0] == s.beta_mean[0]) ++at_center;
    }
    CHECK(at_center == 3);  // center beta at three sigma levels
}

TEST_CASE("outlier ratio check: exact unity and convergence at the center") {
    const auto prob = model::canonical_problem();
    // beta = 0 makes mu = 0 for the outlying row; sigma = 1 is the identity
    auto r = robustness::outlier_ratio_check(prob, 1e8, vec({0.0}), 1.0);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-15));

    // x row of zeros: residual equals the observation for any beta
    Eigen::MatrixXd x(2, 1);
    x << 1, 0;
    auto zprob = model::make_problem(
        x, vec({0, 1}), vec({0, 1}), heavytail::LptnDensity(1.0),
        heavytail::CoefficientPrior::per_coordinate_t(Eigen::VectorXd::Ones(1)),
        heavytail::ScalePrior::half_cauchy(1.0));
    auto rz = robustness::outlier_ratio_check(zprob, 1e6, vec({4.2}), 1.0);
    CHECK(rz[0] == doctest::Approx(1.0).epsilon(1e-15));

    // monotone approach to 1 for omega >= 1e4 at a bulk-scale point
    double prev = std::fabs(
        robustness::outlier_ratio_check(prob, 1e4, vec({-0.1}), 0.54)[0] - 1.0);
    for (double w : {1e5, 1e6, 1e8, 1e10, 1e12}) {
        const double cur = std::fabs(
            robustness::outlier_ratio_check(prob, w, vec({-0.1}), 0.54)[0] - 1.0);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK(prev < 0.15);
}

TEST_CASE("indicator split mass: partition identity at every omega") {
    const auto prob = model::canonical_problem();
    for (double omega : {10.0, 1e4}) {
        const auto [near, far] = robustness::indicator_split_mass(prob, omega, kFast);
        const double ratio = posterior::log_marginal_ratio(prob, omega, kFast);
        CHECK(near + far == doctest::Approx(std::exp(ratio)).epsilon(1e-6));
    }
}

TEST_CASE("sweep: input contracts") {
    const auto prob = model::canonical_problem();
    const std::vector<EvalPoint> pts{{vec({0.0}), 1.0}};
    CHECK_THROWS_AS(robustness::sweep(prob, {}, pts, fast_grid_options()),
                    InvalidInput);
    CHECK_THROWS_AS(robustness::sweep(prob, {1e2, 1e2}, pts, fast_grid_options()),
                    InvalidInput);
    CHECK_THROWS_AS(
        robustness::sweep(prob, {1e2, 1e4}, {}, fast_grid_options()),
        InvalidInput);

    auto b0 = model::make_problem(prob.x, prob.a, Eigen::VectorXd::Zero(5),
                                  prob.error, prob.coeff_prior, prob.scale_prior);
    CHECK_THROWS_AS(robustness::sweep(b0, {1e2, 1e4}, pts, fast_grid_options()),
                    InvalidInput);
}

TEST_CASE("sweep: grid method distances shrink along the ladder") {
    const auto prob = model::canonical_problem();
    const auto g = posterior::grid_posterior(prob, 1e2, prob.inliers, kFast);
    const auto pts = robustness::default_eval_points(prob, g);
    const auto rep =
        robustness::sweep(prob, {1e2, 1e6, 1e12}, pts, fast_grid_options());

    REQUIRE(rep.omegas.size() == 3);
    REQUIRE(rep.pointwise_sup_dist.size() == 3);
    REQUIRE(rep.near_mass.size() == 3);
    CHECK_FALSE(rep.outside_theorem);
    CHECK(rep.condition_margin == 2);
    CHECK(rep.pointwise_sup_dist[1] < rep.pointwise_sup_dist[0]);
    CHECK(rep.pointwise_sup_dist[2] < rep.pointwise_sup_dist[1]);
    CHECK(std::fabs(rep.marginal_ratio[2]) < std::fabs(rep.marginal_ratio[0]));
    // eval point far in both tails contributes nothing measurable
    auto pts2 = pts;
    pts2.push_back({vec({5e3}), 1.0});
    const auto rep2 =
        robustness::sweep(prob, {1e2, 1e6, 1e12}, pts2, fast_grid_options());
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(rep2.pointwise_sup_dist[i] ==
              doctest::Approx(rep.pointwise_sup_dist[i]).epsilon(1e-9));

    // serialization
    const auto j = rep.to_json();
    CHECK(j["omegas"].size() == 3);
    CHECK(j["condition_margin"].get<int>() == 2);
    std::ostringstream os;
    rep.write_csv(os);
    CHECK(os.str().rfind("omega,pointwise_sup_dist", 0) == 0);
}

TEST_CASE("sweep: outside-theorem watermark, no verdict asserted") {
    // n=4, p=2, |L|=2: margin = 2-2-2 = -2
    Eigen::MatrixXd x(4, 2);
    x << 1, 0.5, 1, -0.3, 1, 0.8, 1, -1.1;
    auto prob = model::make_problem(
        x, vec({0.2, -0.4, 0.7, -1.0}), vec({0, 0, 1, -1}),
        heavytail::LptnDensity(1.0),
        heavytail::CoefficientPrior::per_coordinate_t(Eigen::VectorXd::Ones(2)),
        heavytail::ScalePrior::half_cauchy(1.0));
    const std::vector<EvalPoint> pts{{vec({0.0, 0.0}), 0.7}};
    SweepOptions opt;
    opt.method = SweepMethod::mcmc;  // cheap route for p = 2
    opt.mcmc.n_draws = 2000;
    opt.mcmc.seed = 5;
    const auto rep = robustness::sweep(prob, {1e2, 1e4}, pts, opt);
    CHECK(rep.outside_theorem);
    CHECK(rep.condition_margin == -2);
}

TEST_CASE("sweep: grid and mcmc distances agree within Monte-Carlo error") {
    const auto prob = model::canonical_problem();
    const auto g = posterior::grid_posterior(prob, 1e2, prob.inliers, kFast);
    const auto pts = robustness::default_eval_points(prob, g);
    const std::vector<double> omegas{1e2, 1e6, 1e12};

    const auto rep_g = robustness::sweep(prob, omegas, pts, fast_grid_options());
    SweepOptions mo;
    mo.method = SweepMethod::mcmc;
    mo.mcmc.n_draws = 20000;
    mo.mcmc.seed = 424242;
    const auto rep_m = robustness::sweep(prob, omegas, pts, mo);

    // Monte-Carlo se of the normalizing ratio from an independent chain
    auto ch = posterior::mcmc_posterior(prob, 0.0, prob.inliers, mo.mcmc);
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(ch.draws.rows()));
        for (Eigen::Index d = 0; d < ch.draws.rows(); ++d) {
            auto out = robustness::outlier_ratio_check(
                prob, omegas[i], ch.draws.row(d).head(1).transpose(),
                ch.draws(d, 1));
            r[static_cast<std::size_t>(d)] = out[0];
        }
        double mean = 0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(r.size());
        double var = 0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(r.size() - 1);
        const double se_rel = std::sqrt(var / ch.ess.minCoeff()) / mean;
        CHECK(std::fabs(rep_m.pointwise_sup_dist[i] - rep_g.pointwise_sup_dist[i]) <=
              3 * se_rel + 2e-3);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "robustlr/errors.hpp"
#include "robustlr/model.hpp"

using namespace robustlr;
using model::RegressionProblem;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) x[i++] = e;
    return x;
}

RegressionProblem simple_problem(Eigen::MatrixXd x, Eigen::VectorXd a,
                                 Eigen::VectorXd b, double gamma = 1.0) {
    const int p = static_cast<int>(x.cols());
    return model::make_problem(
        std::move(x), std::move(a), std::move(b), heavytail::LptnDensity(gamma),
        heavytail::CoefficientPrior::per_coordinate_t(Eigen::VectorXd::Ones(p)),
        heavytail::ScalePrior::half_cauchy(1.0));
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        path = std::string(std::tmpnam(nullptr)) + ".csv";
        std::ofstream os(path);
        os << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("canonical problem shape") {
    const auto prob = model::canonical_problem();
    CHECK(prob.n() == 5);
    CHECK(prob.p() == 1);
    CHECK(prob.inliers == std::vector<int>{0, 1, 2, 3});
    CHECK(prob.outliers == std::vector<int>{4});
    CHECK(prob.error.gamma() == 1.0);
}

TEST_CASE("make_problem validation and K/L partition") {
    CHECK_THROWS_AS(simple_problem(Eigen::MatrixXd::Ones(3, 1), vec({1, 2}),
                                   vec({0, 0, 0})),
                    InvalidInput);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::bernoulli_distribution zero(0.5);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + static_cast<int>(rng() % 7);
        Eigen::MatrixXd x(n, 1);
        Eigen::VectorXd a(n), b(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = g(rng);
            a[i] = g(rng);
            b[i] = zero(rng) ? 0.0 : g(rng);
        }
        const auto prob = simple_problem(x, a, b);
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        for (int i : prob.inliers) {
            CHECK(prob.b[i] == 0.0);
            seen[static_cast<std::size_t>(i)] = true;
        }
        for (int i : prob.outliers) {
            CHECK(prob.b[i] != 0.0);
            CHECK_FALSE(seen[static_cast<std::size_t>(i)]);
            seen[static_cast<std::size_t>(i)] = true;
        }
        for (bool s : seen) CHECK(s);
    }
}

TEST_CASE("observations_at") {
    auto prob = simple_problem(Eigen::MatrixXd::Ones(2, 1), vec({1, 2}), vec({0, 1}));
    CHECK(model::observations_at(prob, 0.0) == prob.a);
    const auto y = model::observations_at(prob, 1000.0);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 1002.0);
    auto prob2 = simple_problem(Eigen::MatrixXd::Ones(2, 1), vec({1, 2}), vec({0, 0}));
    CHECK(model::observations_at(prob2, 777.0) == prob2.a);
    CHECK_THROWS_AS(model::observations_at(prob, -1.0), InvalidInput);
}

TEST_CASE("log_kernel: term-by-term oracle and subset identities") {
    const auto prob = model::canonical_problem();
    const Eigen::VectorXd beta = vec({0.3});
    const double sigma = 0.8, omega = 50.0;
    const auto all = prob.all_indices();

    // independent term-by-term sum
    double expect = prob.coeff_prior.log_pdf(beta, sigma) +
                    prob.scale_prior.log_pdf(sigma);
    for (int i = 0; i < prob.n(); ++i) {
        const double y = prob.a[i] + prob.b[i] * omega;
        expect += prob.error.log_pdf((y - prob.x.row(i).dot(beta)) / sigma) -
                  std::log(sigma);
    }
    CHECK(model::log_kernel(prob, beta, sigma, omega, all) ==
          doctest::Approx(expect).epsilon(1e-14));

    // prior counted once: full = K + (L likelihood-only)
    const double k_full = model::log_kernel(prob, beta, sigma, omega, all);
    const double k_k = model::log_kernel(prob, beta, sigma, omega, prob.inliers);
    const double k_l = model::log_kernel(prob, beta, sigma, omega, prob.outliers);
    const double prior = model::log_kernel(prob, beta, sigma, omega,
                                           std::vector<int>{});
    CHECK(k_full == doctest::Approx(k_k + (k_l - prior)).epsilon(1e-13));

    // prenormalized form subtracts log f(y_i) over outlying rows
    double lf = 0.0;
    for (int i : prob.outliers)
        lf += prob.error.log_pdf(prob.a[i] + prob.b[i] * omega);
    CHECK(model::log_kernel(prob, beta, sigma, omega, all, true) ==
          doctest::Approx(k_full - lf).epsilon(1e-13));

    // subset = K equals full kernel when L is empty
    auto prob0 = simple_problem(prob.x, prob.a, Eigen::VectorXd::Zero(5));
    CHECK(model::log_kernel(prob0, beta, sigma, omega, prob0.all_indices()) ==
          model::log_kernel(prob0, beta, sigma, omega, prob0.inliers));

    CHECK_THROWS_AS(model::log_kernel(prob, beta, 0.0, omega, all), InvalidInput);
    CHECK_THROWS_AS(model::log_kernel(prob, vec({1, 2}), 1.0, omega, all),
                    InvalidInput);
}

TEST_CASE("robustness_condition margins") {
    // n=5, p=1, one outlier: margin 2
    auto p1 = model::canonical_problem();
    auto c1 = model::robustness_condition(p1);
    CHECK(c1.holds);
    CHECK(c1.margin == 2);

    // n=4, p=2, two outliers: margin -2
    Eigen::MatrixXd x(4, 2);
    x << 1, 0.5, 1, -0.3, 1, 0.8, 1, -1.1;
    auto p2 = model::make_problem(
        x, vec({0, 1, 2, 3}), vec({0, 0, 1, 1}), heavytail::LptnDensity(1.0),
        heavytail::CoefficientPrior::per_coordinate_t(Eigen::VectorXd::Ones(2)),
        heavytail::ScalePrior::half_cauchy(1.0));
    auto c2 = model::robustness_condition(p2);
    CHECK_FALSE(c2.holds);
    CHECK(c2.margin == -2);

    // n=3, p=1, one outlier: boundary margin 0 still holds
    auto p3 = simple_problem(Eigen::MatrixXd::Ones(3, 1), vec({0, 1, 2}),
                             vec({0, 0, 1}));
    auto c3 = model::robustness_condition(p3);
    CHECK(c3.holds);
    CHECK(c3.margin == 0);
}

TEST_CASE("general position: hand-checked examples") {
    // x=(1,2,3), a=(0,1,2), b=(0,0,1): all pairwise determinants nonzero
    Eigen::MatrixXd z(3, 1);
    z << 1, 2, 3;
    auto rep = model::general_position(z, vec({0, 1, 2}), vec({0, 0, 1}));
    CHECK(rep.cond_i);
    CHECK(rep.cond_ii);
    CHECK(rep.cond_iii);
    CHECK(rep.all());

    // intercept-only: (i) holds; (ii) holds iff the a_i are distinct
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 1);
    auto rep2 = model::general_position(ones, vec({0, 1, 2}), vec({0, 0, 1}));
    CHECK(rep2.cond_i);
    CHECK(rep2.cond_ii);
    auto rep3 = model::general_position(ones, vec({0, 1, 0}), vec({0, 0, 1}));
    CHECK(rep3.cond_i);
    CHECK_FALSE(rep3.cond_ii);
    REQUIRE(!rep3.witnesses_ii.empty());
    CHECK(rep3.witnesses_ii.front() == std::vector<int>{0, 2});

    // duplicated row, p = 2: (i) fails with a witness
    Eigen::MatrixXd zd(3, 2);
    zd << 1, 2, 1, 2, 0, 1;
    auto rep4 = model::general_position(zd, vec({0, 1, 2}), vec({0, 0, 1}));
    CHECK_FALSE(rep4.cond_i);
    REQUIRE(!rep4.witnesses_i.empty());
    CHECK(rep4.witnesses_i.front() == std::vector<int>{0, 1});
}

TEST_CASE("general position: permutation invariance of the verdicts") {
    Eigen::MatrixXd z(4, 1);
    z << 1, -1, 2, 0.5;
    Eigen::VectorXd a = vec({0.3, -0.7, 1.1, 0.2}), b = vec({0, 1, 0, -1});
    auto r0 = model::general_position(z, a, b);
    std::vector<int> perm{2, 0, 3, 1};
    Eigen::MatrixXd zp(4, 1);
    Eigen::VectorXd ap(4), bp(4);
    for (int i = 0; i < 4; ++i) {
        zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
        ap[i] = a[perm[static_cast<std::size_t>(i)]];
        bp[i] = b[perm[static_cast<std::size_t>(i)]];
    }
    auto r1 = model::general_position(zp, ap, bp);
    CHECK(r0.cond_i == r1.cond_i);
    CHECK(r0.cond_ii == r1.cond_ii);
    CHECK(r0.cond_iii == r1.cond_iii);
}

TEST_CASE("general position: random continuous designs pass") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    int failures = 0;
    for (int t = 0; t < 100; ++t) {
        const int p = 1 + static_cast<int>(rng() % 3);
        const int n = p + 1 + static_cast<int>(rng() % (8 - p));
        Eigen::MatrixXd z(n, p);
        Eigen::VectorXd a(n), b(n);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < p; ++k) z(i, k) = g(rng);
            a[i] = g(rng);
            b[i] = g(rng);
        }
        if (!model::general_position(z, a, b).all()) ++failures;
    }
    CHECK(failures == 0);
}

TEST_CASE("general position: combinatorial budget error") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(50, 4);
    CHECK_THROWS_AS(model::general_position(z, Eigen::VectorXd::Random(50),
                                            Eigen::VectorXd::Random(50)),
                    BudgetExceeded);
}

TEST_CASE("CSV ingestion") {
    TempFile good("x1,a,b\n1,0.5,0\n2,-0.5,1\n");
    auto d = model::load_design_csv(good.path);
    CHECK(d.x.rows() == 2);
    CHECK(d.x(1, 0) == 2.0);
    CHECK(d.a[0] == 0.5);
    CHECK(d.b[1] == 1.0);

    TempFile two_cols("x1,x2,a,b\n1,2,3,0\n4,5,6,1\n");
    auto d2 = model::load_design_csv(two_cols.path);
    CHECK(d2.x.cols() == 2);

    TempFile bad_header("x1,c,b\n1,2,3\n");
    CHECK_THROWS_WITH_AS(model::load_design_csv(bad_header.path),
                         doctest::Contains("'a'"), ValidationError);

    TempFile bad_number("x1,a,b\n1,0.5,0\n2,oops,1\n");
    CHECK_THROWS_WITH_AS(model::load_design_csv(bad_number.path),
                         doctest::Contains("row 3"), ValidationError);

    TempFile short_row("x1,a,b\n1,0.5\n");
    CHECK_THROWS_WITH_AS(model::load_design_csv(short_row.path),
                         doctest::Contains("row 2"), ValidationError);

    CHECK_THROWS_AS(model::load_design_csv("/nonexistent/file.csv"), ValidationError);
}

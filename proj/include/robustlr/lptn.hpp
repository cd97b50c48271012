#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace robustlr::heavytail {

// Super heavy-tailed error density
//
//     f(z) = (gamma/2) * 1/(1+|z|) * 1/(1+log(1+|z|))^(1+gamma),
//
// proper for every gamma > 0, with closed-form distribution function
//
//     F(z) = 1 - (1/2) * (1+log(1+z))^(-gamma)   for z >= 0,
//     F(z) = 1 - F(-z)                           for z <  0.
//
// All evaluation happens in log space; |z| up to 1e300 is fine.
class LptnDensity {
public:
    explicit LptnDensity(double gamma);

    double gamma() const { return gamma_; }

    double log_pdf(double z) const;
    double pdf(double z) const;
    double cdf(double z) const;

    // Exact inverse of cdf on (0,1). Values whose magnitude exceeds the
    // double range come back as +/-inf; this first happens for
    // (2*min(u,1-u))^(-1/gamma) - 1 > log(DBL_MAX), i.e. only for small
    // gamma at extreme u.
    double quantile(double u) const;

    // n i.i.d. draws by inverse-cdf transform, deterministic given seed.
    std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

private:
    double gamma_;
};

// {f((y - mu)/sigma)/sigma} / f(y), computed in log space. Converges to 1
// as |y| -> inf at rate O(log sigma / log |y|) for fixed (mu, sigma).
double log_tail_ratio(double y, double mu, double sigma, const LptnDensity& d);
double tail_ratio(double y, double mu, double sigma, const LptnDensity& d);

struct S1Check {
    bool applicable = false;  // precondition of the inequality held
    double log_lhs = 0.0;
    double log_bound = 0.0;
    bool pass = false;        // applicable implies log_lhs <= log_bound (+eps)
};

// One record of the three pointwise inequalities satisfied by the density:
//  (ii)  if |y-mu| >= |y|/2 and |y| >= 1:
//          tail ratio <= 4 (1+log 3)^(1+g) (1+log(1+sigma))^(1+g)
//  (iii) f((y-mu)/sigma)/sigma <= (g/2) (1/sigma) / (1+|y-mu|/sigma), always
//  (iv)  if |y| >= 2e:  f(y) >= (g/2^(3+g)) / (|y| (log|y|)^(1+g))
struct S1Record {
    double y, mu, sigma, gamma;
    S1Check part_ii, part_iii, part_iv;
    bool all_pass() const;
    nlohmann::json to_json() const;
};

S1Record lemma_s1_bounds(double y, double mu, double sigma,
                         const LptnDensity& d);

} // namespace robustlr::heavytail

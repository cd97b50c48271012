#include "robustlr/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "robustlr/errors.hpp"

namespace robustlr::quad {

std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 2) throw InvalidInput("linspace: need at least 2 points");
    std::vector<double> x(static_cast<std::size_t>(n));
    const double h = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = lo + h * i;
    x.back() = hi;
    return x;
}

std::vector<double> log_spaced(double lo, double hi, int n) {
    if (!(lo > 0.0) || !(hi > lo)) throw InvalidInput("log_spaced: need 0 < lo < hi");
    auto t = linspace(std::log(lo), std::log(hi), n);
    for (double& v : t) v = std::exp(v);
    t.front() = lo;
    t.back() = hi;
    return t;
}

std::vector<double> trapezoid_weights(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw InvalidInput("trapezoid_weights: need at least 2 points");
    std::vector<double> w(n, 0.0);
    w[0] = (x[1] - x[0]) / 2;
    w[n - 1] = (x[n - 1] - x[n - 2]) / 2;
    for (std::size_t i = 1; i + 1 < n; ++i) w[i] = (x[i + 1] - x[i - 1]) / 2;
    return w;
}

double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

double log_dot_exp(std::span<const double> v, std::span<const double> w) {
    if (v.size() != w.size()) throw InvalidInput("log_dot_exp: size mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * std::exp(v[i] - mx);
    return mx + std::log(s);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
    using boost::math::quadrature::gauss_kronrod;
    return gauss_kronrod<double, 31>::integrate(f, a, b, 12, rel_tol);
}

} // namespace robustlr::quad

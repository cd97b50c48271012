#pragma once

#include <functional>
#include <span>
#include <vector>

namespace robustlr::quad {

std::vector<double> linspace(double lo, double hi, int n);

// n points with logarithmically uniform spacing on [lo, hi], lo, hi > 0.
std::vector<double> log_spaced(double lo, double hi, int n);

// Composite trapezoid weights for an arbitrary sorted abscissa vector.
std::vector<double> trapezoid_weights(std::span<const double> x);

// log(sum exp(v_i)), safe against overflow; -inf for empty input.
double log_sum_exp(std::span<const double> v);

// log(sum w_i * exp(v_i)) with w_i > 0 given linearly.
double log_dot_exp(std::span<const double> v, std::span<const double> w);

// Adaptive Gauss-Kronrod integration of f on the finite interval [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-10);

} // namespace robustlr::quad

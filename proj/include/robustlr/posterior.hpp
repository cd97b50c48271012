#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "robustlr/model.hpp"
#include "robustlr/parallel.hpp"

namespace robustlr::posterior {

// Tensor-grid quadrature controls. The beta axes combine a uniform bulk
// range with log-spaced clusters around every point where a residual (or a
// prior term) is exactly zero; the integrand kinks there and its sigma->0
// spikes live at those centers. doubled() scales every count, which is what
// the self-consistency checks exercise.
struct GridResolution {
    int beta_bulk_points = 8001;      // per beta axis (p = 1)
    int beta_bulk_points_2d = 181;    // per beta axis (p = 2)
    int sigma_per_decade = 50;
    int cluster_per_decade = 48;      // spike clusters, per side, p = 1 only
    double sigma_lo = 1e-4;
    double sigma_hi = 1e4;
    double boundary_mass_tol = 1e-3;
    int max_expansions = 8;

    GridResolution scaled(double factor) const;
    GridResolution doubled() const { return scaled(2.0); }
};

struct GridSummary {
    Eigen::VectorXd beta_mean, beta_sd;
    double sigma_mean = 0, sigma_sd = 0;
    double log_sigma_mean = 0, log_sigma_sd = 0;
    double peak_density = 0;   // max density over the grid
};

// Normalized posterior on a tensor grid over (beta, sigma); sigma log-spaced.
// values[] hold the density in (beta, sigma) coordinates, flattened row-major
// over (beta_1, ..., beta_p, sigma). The trapezoid integral in (beta, log
// sigma) coordinates, with the sigma Jacobian, equals 1 by construction.
struct PosteriorGrid {
    std::vector<Eigen::VectorXd> beta_axes;
    Eigen::VectorXd sigma_axis;
    std::vector<double> values;
    double log_marginal = 0;   // log of the kernel's normalizing constant
    double boundary_mass = 0;  // fraction of mass in the outermost cells

    std::size_t size() const { return values.size(); }
    double total_mass() const;            // trapezoid check, ~1
    GridSummary summarize() const;
    // Marginal density of one beta coordinate on its axis.
    Eigen::VectorXd beta_marginal(int coord = 0) const;
    // Marginal cdf of one beta coordinate (trapezoid cumulative).
    Eigen::VectorXd beta_marginal_cdf(int coord = 0) const;
    nlohmann::json summary_json() const;
};

// Dense quadrature posterior for p <= 2. Ranges are chosen adaptively
// (OLS center +/- 20 robust residual scales, expanded until the boundary
// mass falls below tolerance) at a coarse resolution, then the final grid is
// evaluated once at the requested resolution.
PosteriorGrid grid_posterior(const model::RegressionProblem& prob,
                             double omega, std::span<const int> subset,
                             const GridResolution& res = {},
                             Exec exec = Exec::parallel);

// Integral split and marginal ratio for the outlier-normalized kernel
//   h(beta, sigma; omega) = pi(beta,sigma) prod_K f_i/sigma prod_L [f_i/sigma / f(y_i)].
// near = integral over {every outlier residual >= |y_i|/2}, far = complement,
// both divided by the leave-outliers-out marginal. near + far =
// exp(log_marginal_ratio) holds by construction: for p = 1 the real line is
// partitioned exactly into near/far intervals, each with its own sub-grid;
// for p = 2 the far region is covered by per-outlier slab grids in rotated
// coordinates and the central grid is masked by the indicator.
struct MarginalSplit {
    double near_mass = 0;
    double far_mass = 0;
    double log_marginal_ratio = 0;   // log(near + far)
    double log_k_marginal = 0;
};

MarginalSplit marginal_split(const model::RegressionProblem& prob,
                             double omega, const GridResolution& res = {},
                             Exec exec = Exec::parallel);

// log int h - log int k_K; tends to 0 as omega -> inf when the posterior is
// robust. Exactly 0 when L is empty.
double log_marginal_ratio(const model::RegressionProblem& prob, double omega,
                          const GridResolution& res = {},
                          Exec exec = Exec::parallel);

struct McmcOptions {
    int n_draws = 20000;
    int warmup = -1;              // -1: n_draws/2
    std::uint64_t seed = 1;
    double target_accept = 0.3;
    double min_ess = 100.0;
};

// Random-walk Metropolis on (beta, log sigma). Proposal scales are adapted
// only during the discarded warmup (stochastic-approximation on a global
// log-scale, per-coordinate relative scales from the warmup sample), then
// frozen, so the returned draws come from a fixed valid kernel.
struct McmcChain {
    Eigen::MatrixXd draws;        // n_draws x (p+1); columns beta..., sigma
    double acceptance_rate = 0;
    Eigen::VectorXd ess;          // per column
    std::uint64_t seed = 0;
    bool low_ess_warning = false;

    Eigen::VectorXd mean() const;
    Eigen::VectorXd sd() const;
    nlohmann::json summary_json() const;
};

McmcChain mcmc_posterior(const model::RegressionProblem& prob, double omega,
                         std::span<const int> subset,
                         const McmcOptions& opt = {});

// Effective sample size via Geyer's initial positive sequence.
double effective_sample_size(std::span<const double> x);

// Two(+)-chain potential scale reduction factor for one column.
double gelman_rubin(const std::vector<McmcChain>& chains, int column);

} // namespace robustlr::posterior

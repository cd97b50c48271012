#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "robustlr/model.hpp"
#include "robustlr/posterior.hpp"

namespace robustlr::robustness {

struct EvalPoint {
    Eigen::VectorXd beta;
    double sigma;
};

enum class SweepMethod { grid, mcmc };

struct SweepOptions {
    SweepMethod method = SweepMethod::grid;
    posterior::GridResolution resolution;
    posterior::McmcOptions mcmc;
    Exec exec = Exec::parallel;
};

// Per-omega comparison of the contaminated posterior p(.|y_omega) with the
// leave-outliers-out posterior p(.|y_K). Distances are |p_omega - p_K| at the
// evaluation points divided by the peak of p_K over those points, so the
// tolerances are scale-free.
struct RobustnessReport {
    std::vector<double> omegas;
    std::vector<double> pointwise_sup_dist;
    std::vector<double> ratio_dist;          // sup_i sup_pts ||ratio_i - 1||
    std::vector<double> marginal_ratio;      // log scale
    std::vector<double> log_envelope;
    std::vector<double> near_mass, far_mass; // grid method only
    int condition_margin = 0;
    bool outside_theorem = false;
    SweepMethod method = SweepMethod::grid;
    std::vector<EvalPoint> eval_points;
    double peak_density = 0;                 // max of p_K over eval points

    nlohmann::json to_json() const;
    void write_csv(std::ostream& os) const;
};

// log of omega^|L| (log omega)^(|L|(1+gamma)) / omega^(|K|-p+1).
double log_envelope(const model::RegressionProblem& prob, double omega);

// 3x3 set spanning the K-posterior's center and +/- 2 scales in the first
// beta coordinate and in log sigma (p = 1 gives the canonical 9 points; for
// p > 1 the +/- 2 sd displacements are applied along each coordinate).
std::vector<EvalPoint> default_eval_points(const model::RegressionProblem& prob,
                                           const posterior::PosteriorGrid& k_grid);

// Runs the omega ladder. Requires a nonempty L and a nonempty evaluation
// set; a violated |K| >= |L| + p is allowed but watermarks the report
// outside_theorem.
RobustnessReport sweep(const model::RegressionProblem& prob,
                       const std::vector<double>& omegas,
                       const std::vector<EvalPoint>& eval_points,
                       const SweepOptions& opt = {});

// {f((y_i - x_i^T beta)/sigma)/sigma} / f(y_i) for each i in L.
std::vector<double> outlier_ratio_check(const model::RegressionProblem& prob,
                                        double omega,
                                        const Eigen::VectorXd& beta,
                                        double sigma);

// (near_mass, far_mass) of the indicator split of h, each normalized by the
// leave-outliers-out marginal. Quadrature based, p <= 2.
std::pair<double, double> indicator_split_mass(
    const model::RegressionProblem& prob, double omega,
    const posterior::GridResolution& res = {}, Exec exec = Exec::parallel);

} // namespace robustlr::robustness

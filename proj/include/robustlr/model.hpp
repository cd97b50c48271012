#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "robustlr/lptn.hpp"
#include "robustlr/priors.hpp"

namespace robustlr::model {

// Linear regression with the outlier schedule y_i(omega) = a_i + b_i*omega.
// K = {i : b_i = 0} collects the non-outlying rows, L = {i : b_i != 0} the
// outlying ones; the two sets partition {0..n-1}.
struct RegressionProblem {
    Eigen::MatrixXd x;   // n x p design, rows x_i^T
    Eigen::VectorXd a;   // baseline observations
    Eigen::VectorXd b;   // outlier directions
    heavytail::LptnDensity error;
    heavytail::CoefficientPrior coeff_prior;
    heavytail::ScalePrior scale_prior;

    std::vector<int> inliers;    // K
    std::vector<int> outliers;   // L

    int n() const { return static_cast<int>(x.rows()); }
    int p() const { return static_cast<int>(x.cols()); }
    std::vector<int> all_indices() const;
};

// Validates dimensions and derives K/L. Throws InvalidInput.
RegressionProblem make_problem(Eigen::MatrixXd x, Eigen::VectorXd a,
                               Eigen::VectorXd b, heavytail::LptnDensity error,
                               heavytail::CoefficientPrior coeff_prior,
                               heavytail::ScalePrior scale_prior);

// The pinned reference experiment: n=5, p=1, x = 1, a = (-1,-0.5,0,0.5,1),
// b = (0,0,0,0,1), gamma = 1, per-coordinate t prior nu=1, half-Cauchy(1)
// scale prior.
RegressionProblem canonical_problem();

struct DesignData {
    Eigen::MatrixXd x;
    Eigen::VectorXd a, b;
};

// CSV with mandatory header x1,...,xp,a,b. Throws ValidationError naming the
// offending row or column.
DesignData load_design_csv(const std::string& path);

Eigen::VectorXd observations_at(const RegressionProblem& prob, double omega);

// log pi(beta, sigma) + sum over the subset of log{f((y_i - x_i^T beta)/sigma)/sigma}.
// With prenormalize_outliers, every outlying term is divided by f(y_i(omega)),
// the form whose magnitude stays O(1) as omega grows.
double log_kernel(const RegressionProblem& prob, const Eigen::VectorXd& beta,
                  double sigma, double omega, std::span<const int> subset,
                  bool prenormalize_outliers = false);

struct ConditionCheck {
    int margin = 0;      // |K| - |L| - p
    bool holds = false;
};
ConditionCheck robustness_condition(const RegressionProblem& prob);

// General-position conditions on rows z_i and columns a, b:
//  (i)   every p-subset of rows forms an invertible matrix
//  (ii)  every (p+1)-subset augmented with the a-column is invertible
//  (iii) same with the b-column, exempting subsets whose b entries are all 0
// Invertibility: smallest singular value > tol * largest.
struct GeneralPositionReport {
    bool cond_i = false, cond_ii = false, cond_iii = false;
    std::vector<std::vector<int>> witnesses_i, witnesses_ii, witnesses_iii;
    bool all() const { return cond_i && cond_ii && cond_iii; }
};

GeneralPositionReport general_position(const Eigen::MatrixXd& z,
                                       const Eigen::VectorXd& a,
                                       const Eigen::VectorXd& b,
                                       double tol = 1e-9);
GeneralPositionReport general_position(const RegressionProblem& prob,
                                       double tol = 1e-9);

} // namespace robustlr::model

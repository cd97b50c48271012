#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "robustlr/model.hpp"
#include "robustlr/parallel.hpp"

namespace robustlr::lemmalab {

// Small instance for the two geometric lemmas: m rows z_i in R^p with
// schedule columns (a, b) for the covering statement and an optional offset
// vector w for the product bound.
struct LemmaInstance {
    int p = 0, m = 0;
    Eigen::MatrixXd z;   // m x p
    Eigen::VectorXd a, b;
    Eigen::VectorXd w;   // may be empty; product-bound variant only

    std::string name;

    nlohmann::json to_json() const;
    static LemmaInstance from_json(const nlohmann::json& j);
    // FNV-1a over the canonical serialization; embedded in certificates.
    std::uint64_t hash() const;
};

// The proof's augmentation device: p extra rows holding the standard basis
// vectors with (a, b) = (0, 0), prepended to the problem's design rows.
LemmaInstance augmented_from_problem(const model::RegressionProblem& prob);

// Six pinned instances, p in {1, 2}, m <= 5, all satisfying the
// general-position conditions; each carries a w column.
std::vector<LemmaInstance> builtin_instances();

struct SampleOptions {
    std::size_t sample_budget = 100000;
    std::uint64_t seed = 0xc0ffee;
    Exec exec = Exec::parallel;
    bool force_sampled = false;   // skip the exact p = 1 path (testing only)
};

// Covering check at one (epsilon, omega): every beta must leave at most p of
// the residuals |a_i + b_i omega - z_i^T beta| within epsilon. p = 1 is
// decided exactly by pairwise interval intersection; p >= 2 samples a
// stratified set (grid in an omega-scaled ball, far shell, random points).
// Failing betas are re-evaluated directly before being reported.
struct CoveringResult {
    bool pass = false;
    bool exact = false;
    std::optional<Eigen::VectorXd> witness;
    std::size_t samples_checked = 0;
};

CoveringResult verify_covering(const LemmaInstance& inst, double epsilon,
                               double omega, const SampleOptions& opt = {});

// Searches a log grid of epsilon and a ladder of M for a pair that passes
// verify_covering at omega in {M, 2M, 10M, 100M}. found=false means the
// budget ran out, not that the statement failed.
struct CoveringCertificate {
    bool found = false;
    double epsilon = 0, m_omega = 0;
    std::vector<double> checked_omegas;
    std::uint64_t instance_hash = 0;
    std::string instance_name;
    nlohmann::json to_json() const;
};

CoveringCertificate find_epsilon_omega(const LemmaInstance& inst,
                                       const SampleOptions& opt = {});

// Product bound at one (R, delta):
//   prod_i 1/(1+|w_i - z_i^T beta|) <= 1/(1+delta ||beta||)^(m-p+1)
// for all sampled beta with ||beta|| >= R (radial log grid x directions up
// to 1e6 R, plus random points). Witnesses re-checked before reporting.
struct ProductBoundResult {
    bool pass = false;
    std::optional<Eigen::VectorXd> witness;
    std::size_t samples_checked = 0;
};

ProductBoundResult verify_product_bound(const LemmaInstance& inst, double R,
                                        double delta,
                                        const SampleOptions& opt = {});

struct ProductBoundCertificate {
    bool found = false;
    double r = 0, delta = 0;
    std::uint64_t instance_hash = 0;
    std::string instance_name;
    nlohmann::json to_json() const;
};

// First passing pair on the grid delta in {2^-k}, R in {2^k}.
ProductBoundCertificate find_r_delta(const LemmaInstance& inst,
                                     const SampleOptions& opt = {});

} // namespace robustlr::lemmalab

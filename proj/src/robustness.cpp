#include "robustlr/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "robustlr/errors.hpp"
#include "robustlr/lptn.hpp"

namespace robustlr::robustness {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

double log_envelope(const model::RegressionProblem& prob, double omega) {
    if (!(omega > 1.0))
        throw InvalidInput("log_envelope: omega must exceed 1 (log omega > 0)");
    const double nk = static_cast<double>(prob.inliers.size());
    const double nl = static_cast<double>(prob.outliers.size());
    const double p = prob.p();
    const double g = prob.error.gamma();
    return nl * std::log(omega) + nl * (1 + g) * std::log(std::log(omega)) -
           (nk - p + 1) * std::log(omega);
}

std::vector<EvalPoint> default_eval_points(const model::RegressionProblem& prob,
                                           const posterior::PosteriorGrid& k_grid) {
    const posterior::GridSummary s = k_grid.summarize();
    const int p = prob.p();
    std::vector<EvalPoint> pts;
    const double sig_levels[3] = {std::exp(s.log_sigma_mean - 2 * s.log_sigma_sd),
                                  std::exp(s.log_sigma_mean),
                                  std::exp(s.log_sigma_mean + 2 * s.log_sigma_sd)};
    for (double sig : sig_levels) {
        pts.push_back({s.beta_mean, sig});
        for (int k = 0; k < p; ++k) {
            Eigen::VectorXd lo = s.beta_mean, hi = s.beta_mean;
            lo[k] -= 2 * s.beta_sd[k];
            hi[k] += 2 * s.beta_sd[k];
            pts.push_back({lo, sig});
            pts.push_back({hi, sig});
        }
    }
    return pts;
}

std::vector<double> outlier_ratio_check(const model::RegressionProblem& prob,
                                        double omega,
                                        const Eigen::VectorXd& beta,
                                        double sigma) {
    if (!(sigma > 0.0)) throw InvalidInput("outlier_ratio_check: sigma must be > 0");
    if (beta.size() != prob.p())
        throw InvalidInput("outlier_ratio_check: beta dimension mismatch");
    std::vector<double> ratios;
    ratios.reserve(prob.outliers.size());
    for (int i : prob.outliers) {
        const double y = prob.a[i] + prob.b[i] * omega;
        const double mu = prob.x.row(i).dot(beta);
        ratios.push_back(heavytail::tail_ratio(y, mu, sigma, prob.error));
    }
    return ratios;
}

std::pair<double, double> indicator_split_mass(
    const model::RegressionProblem& prob, double omega,
    const posterior::GridResolution& res, Exec exec) {
    const auto split = posterior::marginal_split(prob, omega, res, exec);
    return {split.near_mass, split.far_mass};
}

namespace {

// log of the outlier ratio product prod_L {f((y_i - x_i beta)/sigma)/sigma} / f(y_i)
double log_ratio_product(const model::RegressionProblem& prob, double omega,
                         const Eigen::VectorXd& beta, double sigma) {
    double s = 0.0;
    for (int i : prob.outliers) {
        const double y = prob.a[i] + prob.b[i] * omega;
        const double mu = prob.x.row(i).dot(beta);
        s += heavytail::log_tail_ratio(y, mu, sigma, prob.error);
    }
    return s;
}

} // namespace

RobustnessReport sweep(const model::RegressionProblem& prob,
                       const std::vector<double>& omegas,
                       const std::vector<EvalPoint>& eval_points,
                       const SweepOptions& opt) {
    if (prob.outliers.empty())
        throw InvalidInput("sweep: L is empty, no outlier schedule to sweep");
    if (eval_points.empty()) throw InvalidInput("sweep: empty evaluation set");
    if (omegas.empty()) throw InvalidInput("sweep: empty omega ladder");
    for (std::size_t i = 1; i < omegas.size(); ++i)
        if (!(omegas[i] > omegas[i - 1]))
            throw InvalidInput("sweep: omegas must be strictly increasing");

    RobustnessReport rep;
    rep.method = opt.method;
    rep.eval_points = eval_points;
    const auto cond = model::robustness_condition(prob);
    rep.condition_margin = cond.margin;
    rep.outside_theorem = !cond.holds;

    // Leave-outliers-out posterior log-densities at the evaluation points.
    // The peak normalization cancels the K normalizing constant, so the mcmc
    // route needs no quadrature at all (and works for any p); the grid route
    // normalizes absolutely via the K grid.
    std::vector<double> log_pk(eval_points.size());
    for (std::size_t e = 0; e < eval_points.size(); ++e) {
        const auto& pt = eval_points[e];
        log_pk[e] = model::log_kernel(prob, pt.beta, pt.sigma, omegas.front(),
                                      prob.inliers, false);
    }
    posterior::McmcChain k_chain;
    if (opt.method == SweepMethod::grid) {
        const posterior::PosteriorGrid k_grid = posterior::grid_posterior(
            prob, omegas.front(), prob.inliers, opt.resolution, opt.exec);
        for (auto& v : log_pk) v -= k_grid.log_marginal;
    } else {
        // one chain on the omega-invariant K posterior provides the
        // normalizing ratio E_K[prod ratios] by reweighting
        k_chain = posterior::mcmc_posterior(prob, omegas.front(), prob.inliers,
                                            opt.mcmc);
    }
    rep.peak_density = std::exp(*std::max_element(log_pk.begin(), log_pk.end()));

    for (double omega : omegas) {
        double log_zratio;  // log (int h / int k_K)
        if (opt.method == SweepMethod::grid) {
            const auto split =
                posterior::marginal_split(prob, omega, opt.resolution, opt.exec);
            rep.near_mass.push_back(split.near_mass);
            rep.far_mass.push_back(split.far_mass);
            log_zratio = split.log_marginal_ratio;
        } else {
            // chain average of the ratio product
            const auto& draws = k_chain.draws;
            const int p = prob.p();
            std::vector<double> logr(static_cast<std::size_t>(draws.rows()));
            for (Eigen::Index i = 0; i < draws.rows(); ++i) {
                Eigen::VectorXd beta = draws.row(i).head(p).transpose();
                logr[static_cast<std::size_t>(i)] =
                    log_ratio_product(prob, omega, beta, draws(i, p));
            }
            double mx = -kInf;
            for (double v : logr) mx = std::max(mx, v);
            double s = 0;
            for (double v : logr) s += std::exp(v - mx);
            log_zratio = mx + std::log(s / static_cast<double>(draws.rows()));
        }
        rep.marginal_ratio.push_back(log_zratio);

        double sup = 0.0, rdist = 0.0;
        for (std::size_t e = 0; e < eval_points.size(); ++e) {
            const auto& pt = eval_points[e];
            const double lr = log_ratio_product(prob, omega, pt.beta, pt.sigma);
            const double p_k = std::exp(log_pk[e]);
            const double p_w = std::exp(log_pk[e] + lr - log_zratio);
            sup = std::max(sup, std::fabs(p_w - p_k) / rep.peak_density);
            for (double r : outlier_ratio_check(prob, omega, pt.beta, pt.sigma))
                rdist = std::max(rdist, std::fabs(r - 1.0));
        }
        rep.pointwise_sup_dist.push_back(sup);
        rep.ratio_dist.push_back(rdist);
        rep.log_envelope.push_back(log_envelope(prob, omega));
        rep.omegas.push_back(omega);
    }
    return rep;
}

nlohmann::json RobustnessReport::to_json() const {
    nlohmann::json j;
    j["method"] = method == SweepMethod::grid ? "grid" : "mcmc";
    j["condition_margin"] = condition_margin;
    j["outside_theorem"] = outside_theorem;
    j["omegas"] = omegas;
    j["pointwise_sup_dist"] = pointwise_sup_dist;
    j["ratio_dist"] = ratio_dist;
    j["log_marginal_ratio"] = marginal_ratio;
    j["log_envelope"] = log_envelope;
    if (!near_mass.empty()) {
        j["near_mass"] = near_mass;
        j["far_mass"] = far_mass;
    }
    j["peak_density"] = peak_density;
    auto pts = nlohmann::json::array();
    for (const auto& pt : eval_points) {
        nlohmann::json e;
        e["beta"] = std::vector<double>(pt.beta.data(), pt.beta.data() + pt.beta.size());
        e["sigma"] = pt.sigma;
        pts.push_back(e);
    }
    j["eval_points"] = pts;
    return j;
}

void RobustnessReport::write_csv(std::ostream& os) const {
    os << "omega,pointwise_sup_dist,ratio_dist,log_marginal_ratio,log_envelope";
    const bool masses = !near_mass.empty();
    if (masses) os << ",near_mass,far_mass";
    os << "\n";
    os.precision(17);
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        os << omegas[i] << ',' << pointwise_sup_dist[i] << ',' << ratio_dist[i]
           << ',' << marginal_ratio[i] << ',' << log_envelope[i];
        if (masses) os << ',' << near_mass[i] << ',' << far_mass[i];
        os << "\n";
    }
}

} // namespace robustlr::robustness

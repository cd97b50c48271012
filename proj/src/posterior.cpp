#include "robustlr/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "robustlr/errors.hpp"
#include "robustlr/quadrature.hpp"

namespace robustlr::posterior {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using model::RegressionProblem;

GridResolution clamp_counts(GridResolution r) {
    r.beta_bulk_points = std::max(r.beta_bulk_points, 33);
    r.beta_bulk_points_2d = std::max(r.beta_bulk_points_2d, 17);
    r.sigma_per_decade = std::max(r.sigma_per_decade, 4);
    r.cluster_per_decade = std::max(r.cluster_per_decade, 2);
    return r;
}

// ---------------------------------------------------------------------------
// OLS anchor for the beta ranges: K rows when available, robust scale from
// the median absolute residual.

struct Anchor {
    Eigen::VectorXd center;
    double scale = 1.0;  // robust residual scale
};

Anchor ols_anchor(const RegressionProblem& prob) {
    const auto& rows = prob.inliers.empty() ? prob.all_indices() : prob.inliers;
    const int m = static_cast<int>(rows.size());
    const int p = prob.p();
    Anchor anc;
    anc.center = Eigen::VectorXd::Zero(p);
    if (m >= p) {
        Eigen::MatrixXd xs(m, p);
        Eigen::VectorXd ys(m);
        for (int r = 0; r < m; ++r) {
            xs.row(r) = prob.x.row(rows[static_cast<std::size_t>(r)]);
            ys[r] = prob.a[rows[static_cast<std::size_t>(r)]];
        }
        anc.center = xs.colPivHouseholderQr().solve(ys);
        Eigen::VectorXd resid = ys - xs * anc.center;
        std::vector<double> ar(static_cast<std::size_t>(m));
        for (int r = 0; r < m; ++r) ar[static_cast<std::size_t>(r)] = std::fabs(resid[r]);
        std::nth_element(ar.begin(), ar.begin() + m / 2, ar.end());
        anc.scale = ar[static_cast<std::size_t>(m) / 2];
    }
    if (!(anc.scale > 0.0)) anc.scale = 1.0;
    return anc;
}

// ---------------------------------------------------------------------------
// Axis construction

// Sorted unique merge with a relative tolerance so cluster points do not
// create degenerate cells.
Eigen::VectorXd merge_axis(std::vector<double> pts) {
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    out.reserve(pts.size());
    const double span = std::max(pts.back() - pts.front(), 1e-300);
    for (double v : pts)
        if (out.empty() || v - out.back() > 1e-14 * span) out.push_back(v);
    Eigen::VectorXd ax(static_cast<Eigen::Index>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) ax[static_cast<Eigen::Index>(i)] = out[i];
    return ax;
}

// Uniform bulk grid on [lo, hi] plus log-spaced clusters around each spike
// center (points where a residual or prior term is exactly zero; the
// integrand kinks there and carries sigma->0 spikes).
Eigen::VectorXd bulk_beta_axis(double lo, double hi, int n_bulk,
                               std::span<const double> spike_centers,
                               double spike_scale, int cluster_per_decade) {
    std::vector<double> pts;
    auto lin = quad::linspace(lo, hi, n_bulk);
    pts.insert(pts.end(), lin.begin(), lin.end());
    const double off_lo = spike_scale * 1e-5;
    const double off_hi = spike_scale * 3.0;
    const int n_off = static_cast<int>(std::ceil(
        cluster_per_decade * std::log10(off_hi / off_lo)));
    const auto offs = quad::log_spaced(off_lo, off_hi, std::max(n_off, 4));
    for (double c : spike_centers) {
        if (c < lo || c > hi) continue;
        pts.push_back(c);
        for (double o : offs) {
            if (c + o <= hi) pts.push_back(c + o);
            if (c - o >= lo) pts.push_back(c - o);
        }
    }
    return merge_axis(std::move(pts));
}

std::vector<double> spike_centers_1d(const RegressionProblem& prob,
                                     std::span<const int> subset, double omega) {
    std::vector<double> centers{0.0};  // prior kink at beta = 0
    for (int i : subset) {
        const double xi = prob.x(i, 0);
        if (xi != 0.0)
            centers.push_back((prob.a[i] + prob.b[i] * omega) / xi);
    }
    return centers;
}

Eigen::VectorXd sigma_t_axis(double sigma_lo, double sigma_hi, int per_decade) {
    const double d = std::log10(sigma_hi / sigma_lo);
    const int n = std::max(static_cast<int>(std::ceil(per_decade * d)) + 1, 9);
    auto t = quad::linspace(std::log(sigma_lo), std::log(sigma_hi), n);
    Eigen::VectorXd ax(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) ax[static_cast<Eigen::Index>(i)] = t[i];
    return ax;
}

// ---------------------------------------------------------------------------
// Tensor grid over (beta axes..., t = log sigma) with trapezoid weights.
// log_vals stores the log kernel; the sigma Jacobian enters reductions as +t.

struct TensorGrid {
    std::vector<Eigen::VectorXd> beta_axes;
    Eigen::VectorXd t_axis;
    std::vector<std::vector<double>> wb;  // per beta axis
    std::vector<double> wt;
    std::vector<double> log_vals;  // row-major (beta..., t)

    std::size_t n_beta() const {
        std::size_t n = 1;
        for (const auto& ax : beta_axes) n *= static_cast<std::size_t>(ax.size());
        return n;
    }
    std::size_t size() const { return n_beta() * static_cast<std::size_t>(t_axis.size()); }

    double log_weight_beta(std::size_t flat_b) const {
        double lw = 0.0;
        for (std::size_t k = beta_axes.size(); k-- > 0;) {
            const auto nk = static_cast<std::size_t>(beta_axes[k].size());
            lw += std::log(wb[k][flat_b % nk]);
            flat_b /= nk;
        }
        return lw;
    }
};

std::vector<double> axis_weights(const Eigen::VectorXd& ax) {
    std::vector<double> x(static_cast<std::size_t>(ax.size()));
    for (Eigen::Index i = 0; i < ax.size(); ++i) x[static_cast<std::size_t>(i)] = ax[i];
    return quad::trapezoid_weights(x);
}

using KernelFn = std::function<double(const Eigen::VectorXd&, double)>;  // (beta, sigma) -> log h

void evaluate_grid(TensorGrid& g, const KernelFn& kernel, Exec exec) {
    const std::size_t nb = g.n_beta();
    const auto nt = static_cast<std::size_t>(g.t_axis.size());
    g.log_vals.assign(nb * nt, -kInf);
    const int p = static_cast<int>(g.beta_axes.size());

    // Precompute sigma values once.
    std::vector<double> sigmas(nt);
    for (std::size_t j = 0; j < nt; ++j) sigmas[j] = std::exp(g.t_axis[static_cast<Eigen::Index>(j)]);

    const auto ib_count = static_cast<long long>(nb);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (long long ib = 0; ib < ib_count; ++ib) {
        Eigen::VectorXd beta(p);
        std::size_t rem = static_cast<std::size_t>(ib);
        for (int k = p; k-- > 0;) {
            const auto nk = static_cast<std::size_t>(g.beta_axes[static_cast<std::size_t>(k)].size());
            beta[k] = g.beta_axes[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(rem % nk)];
            rem /= nk;
        }
        double* row = g.log_vals.data() + static_cast<std::size_t>(ib) * nt;
        for (std::size_t j = 0; j < nt; ++j) row[j] = kernel(beta, sigmas[j]);
    }
}

// log of the trapezoid integral of exp(log_vals) in (beta, log sigma)
// coordinates, i.e. including the sigma Jacobian. Serial reduction in index
// order: results do not depend on the thread count.
double log_trapezoid_integral(const TensorGrid& g) {
    const std::size_t nb = g.n_beta();
    const auto nt = static_cast<std::size_t>(g.t_axis.size());
    std::vector<double> lwt(nt);
    for (std::size_t j = 0; j < nt; ++j)
        lwt[j] = g.t_axis[static_cast<Eigen::Index>(j)] + std::log(g.wt[j]);
    double mx = -kInf;
    for (std::size_t ib = 0; ib < nb; ++ib) {
        const double lwb = g.log_weight_beta(ib);
        const double* row = g.log_vals.data() + ib * nt;
        for (std::size_t j = 0; j < nt; ++j)
            mx = std::max(mx, row[j] + lwt[j] + lwb);
    }
    if (!std::isfinite(mx)) return -kInf;
    double s = 0.0;
    for (std::size_t ib = 0; ib < nb; ++ib) {
        const double lwb = g.log_weight_beta(ib);
        const double* row = g.log_vals.data() + ib * nt;
        for (std::size_t j = 0; j < nt; ++j)
            s += std::exp(row[j] + lwt[j] + lwb - mx);
    }
    return mx + std::log(s);
}

// Mass fraction carried by the outermost layer of cells (any axis end).
double outer_layer_mass(const TensorGrid& g, double log_total) {
    const std::size_t nb = g.n_beta();
    const auto nt = static_cast<std::size_t>(g.t_axis.size());
    const int p = static_cast<int>(g.beta_axes.size());
    double s = 0.0;
    for (std::size_t ib = 0; ib < nb; ++ib) {
        bool edge_b = false;
        std::size_t rem = ib;
        for (int k = p; k-- > 0;) {
            const auto nk = static_cast<std::size_t>(g.beta_axes[static_cast<std::size_t>(k)].size());
            const std::size_t i = rem % nk;
            if (i == 0 || i + 1 == nk) edge_b = true;
            rem /= nk;
        }
        const double lwb = g.log_weight_beta(ib);
        const double* row = g.log_vals.data() + ib * nt;
        for (std::size_t j = 0; j < nt; ++j) {
            if (!edge_b && j != 0 && j + 1 != nt) continue;
            s += std::exp(row[j] + g.t_axis[static_cast<Eigen::Index>(j)] + lwb +
                          std::log(g.wt[j]) - log_total);
        }
    }
    return s;
}

// Per-side boundary-layer masses: beta lo/hi (on the first axis... on any
// axis combined per side index), t lo/hi.
struct SideMass {
    double beta_lo = 0, beta_hi = 0, t_lo = 0, t_hi = 0;
};

SideMass side_masses(const TensorGrid& g, double log_total) {
    const std::size_t nb = g.n_beta();
    const auto nt = static_cast<std::size_t>(g.t_axis.size());
    const int p = static_cast<int>(g.beta_axes.size());
    SideMass sm;
    for (std::size_t ib = 0; ib < nb; ++ib) {
        bool lo_b = false, hi_b = false;
        std::size_t rem = ib;
        for (int k = p; k-- > 0;) {
            const auto nk = static_cast<std::size_t>(g.beta_axes[static_cast<std::size_t>(k)].size());
            const std::size_t i = rem % nk;
            if (i == 0) lo_b = true;
            if (i + 1 == nk) hi_b = true;
            rem /= nk;
        }
        const double lwb = g.log_weight_beta(ib);
        const double* row = g.log_vals.data() + ib * nt;
        for (std::size_t j = 0; j < nt; ++j) {
            const double m = std::exp(row[j] + g.t_axis[static_cast<Eigen::Index>(j)] +
                                      lwb + std::log(g.wt[j]) - log_total);
            if (lo_b) sm.beta_lo += m;
            if (hi_b) sm.beta_hi += m;
            if (j == 0) sm.t_lo += m;
            if (j + 1 == nt) sm.t_hi += m;
        }
    }
    return sm;
}

void finalize_weights(TensorGrid& g) {
    g.wb.clear();
    for (const auto& ax : g.beta_axes) g.wb.push_back(axis_weights(ax));
    g.wt = axis_weights(g.t_axis);
}

// ---------------------------------------------------------------------------
// Range determination (coarse, fixed internal resolution so that the final
// resolution parameter does not influence the chosen ranges).

struct Ranges {
    std::vector<std::pair<double, double>> beta;  // per axis
    double sigma_lo, sigma_hi;
};

Ranges determine_ranges(const RegressionProblem& prob, const KernelFn& kernel,
                        std::span<const double> spike_centers,
                        const GridResolution& res, Exec exec) {
    const int p = prob.p();
    const Anchor anc = ols_anchor(prob);
    Ranges rg;
    rg.sigma_lo = res.sigma_lo;
    rg.sigma_hi = res.sigma_hi;
    for (int k = 0; k < p; ++k)
        rg.beta.emplace_back(anc.center[k] - 20 * anc.scale,
                             anc.center[k] + 20 * anc.scale);

    const int coarse_bulk = (p == 1) ? 601 : 81;
    for (int pass = 0; pass < res.max_expansions; ++pass) {
        TensorGrid g;
        for (int k = 0; k < p; ++k) {
            if (p == 1) {
                g.beta_axes.push_back(bulk_beta_axis(rg.beta[static_cast<std::size_t>(k)].first,
                                                     rg.beta[static_cast<std::size_t>(k)].second,
                                                     coarse_bulk, spike_centers,
                                                     anc.scale, 8));
            } else {
                g.beta_axes.push_back(merge_axis([&] {
                    auto v = quad::linspace(rg.beta[static_cast<std::size_t>(k)].first,
                                            rg.beta[static_cast<std::size_t>(k)].second,
                                            coarse_bulk);
                    return v;
                }()));
            }
        }
        g.t_axis = sigma_t_axis(rg.sigma_lo, rg.sigma_hi, 10);
        finalize_weights(g);
        evaluate_grid(g, kernel, exec);
        const double lz = log_trapezoid_integral(g);
        if (!std::isfinite(lz))
            throw InvalidInput("grid_posterior: kernel not integrable on the trial range");
        const SideMass sm = side_masses(g, lz);
        const double tol = res.boundary_mass_tol / 4;
        bool expanded = false;
        for (int k = 0; k < p; ++k) {
            // expansion applies to all beta axes jointly via side masses of
            // the flattened edge; grow both ends when either side triggers
            auto& [lo, hi] = rg.beta[static_cast<std::size_t>(k)];
            const double c = anc.center[k];
            if (sm.beta_lo > tol) { lo = c - (c - lo) * 1.8; expanded = true; }
            if (sm.beta_hi > tol) { hi = c + (hi - c) * 1.8; expanded = true; }
        }
        if (sm.t_lo > tol) { rg.sigma_lo /= 100.0; expanded = true; }
        if (sm.t_hi > tol) { rg.sigma_hi *= 100.0; expanded = true; }
        if (!expanded) break;
    }
    return rg;
}

KernelFn make_kernel(const RegressionProblem& prob, double omega,
                     std::vector<int> subset, bool prenormalize) {
    return [&prob, omega, subset = std::move(subset), prenormalize](
               const Eigen::VectorXd& beta, double sigma) {
        return model::log_kernel(prob, beta, sigma, omega, subset, prenormalize);
    };
}

} // namespace

GridResolution GridResolution::scaled(double f) const {
    GridResolution r = *this;
    r.beta_bulk_points = static_cast<int>(std::lround(beta_bulk_points * f));
    r.beta_bulk_points_2d = static_cast<int>(std::lround(beta_bulk_points_2d * f));
    r.sigma_per_decade = static_cast<int>(std::lround(sigma_per_decade * f));
    r.cluster_per_decade = static_cast<int>(std::lround(cluster_per_decade * f));
    return clamp_counts(r);
}

double PosteriorGrid::total_mass() const {
    double s = 0.0;
    std::vector<std::vector<double>> wbs;
    for (const auto& ax : beta_axes) wbs.push_back(axis_weights(ax));
    std::vector<double> ts(static_cast<std::size_t>(sigma_axis.size()));
    for (Eigen::Index i = 0; i < sigma_axis.size(); ++i)
        ts[static_cast<std::size_t>(i)] = std::log(sigma_axis[i]);
    const auto wt = quad::trapezoid_weights(ts);
    std::size_t nb = 1;
    for (const auto& ax : beta_axes) nb *= static_cast<std::size_t>(ax.size());
    const auto nt = static_cast<std::size_t>(sigma_axis.size());
    for (std::size_t ib = 0; ib < nb; ++ib) {
        double wbeta = 1.0;
        std::size_t rem = ib;
        for (std::size_t k = beta_axes.size(); k-- > 0;) {
            const auto nk = static_cast<std::size_t>(beta_axes[k].size());
            wbeta *= wbs[k][rem % nk];
            rem /= nk;
        }
        for (std::size_t j = 0; j < nt; ++j)
            s += values[ib * nt + j] * sigma_axis[static_cast<Eigen::Index>(j)] *
                 wbeta * wt[j];
    }
    return s;
}

GridSummary PosteriorGrid::summarize() const {
    GridSummary out;
    const int p = static_cast<int>(beta_axes.size());
    out.beta_mean = Eigen::VectorXd::Zero(p);
    out.beta_sd = Eigen::VectorXd::Zero(p);

    std::vector<std::vector<double>> wbs;
    for (const auto& ax : beta_axes) wbs.push_back(axis_weights(ax));
    std::vector<double> ts(static_cast<std::size_t>(sigma_axis.size()));
    for (Eigen::Index i = 0; i < sigma_axis.size(); ++i)
        ts[static_cast<std::size_t>(i)] = std::log(sigma_axis[i]);
    const auto wt = quad::trapezoid_weights(ts);

    std::size_t nb = 1;
    for (const auto& ax : beta_axes) nb *= static_cast<std::size_t>(ax.size());
    const auto nt = static_cast<std::size_t>(sigma_axis.size());

    double m1s = 0, m2s = 0, m1t = 0, m2t = 0, tot = 0;
    Eigen::VectorXd m1b = Eigen::VectorXd::Zero(p), m2b = Eigen::VectorXd::Zero(p);
    for (std::size_t ib = 0; ib < nb; ++ib) {
        Eigen::VectorXd beta(p);
        double wbeta = 1.0;
        std::size_t rem = ib;
        for (int k = p; k-- > 0;) {
            const auto nk = static_cast<std::size_t>(beta_axes[static_cast<std::size_t>(k)].size());
            beta[k] = beta_axes[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(rem % nk)];
            wbeta *= wbs[static_cast<std::size_t>(k)][rem % nk];
            rem /= nk;
        }
        for (std::size_t j = 0; j < nt; ++j) {
            const double sig = sigma_axis[static_cast<Eigen::Index>(j)];
            const double m = values[ib * nt + j] * sig * wbeta * wt[j];
            tot += m;
            for (int k = 0; k < p; ++k) {
                m1b[k] += m * beta[k];
                m2b[k] += m * beta[k] * beta[k];
            }
            m1s += m * sig;
            m2s += m * sig * sig;
            m1t += m * ts[j];
            m2t += m * ts[j] * ts[j];
            out.peak_density = std::max(out.peak_density, values[ib * nt + j]);
        }
    }
    for (int k = 0; k < p; ++k) {
        out.beta_mean[k] = m1b[k] / tot;
        out.beta_sd[k] = std::sqrt(std::max(0.0, m2b[k] / tot - out.beta_mean[k] * out.beta_mean[k]));
    }
    out.sigma_mean = m1s / tot;
    out.sigma_sd = std::sqrt(std::max(0.0, m2s / tot - out.sigma_mean * out.sigma_mean));
    out.log_sigma_mean = m1t / tot;
    out.log_sigma_sd = std::sqrt(std::max(0.0, m2t / tot - out.log_sigma_mean * out.log_sigma_mean));
    return out;
}

Eigen::VectorXd PosteriorGrid::beta_marginal(int coord) const {
    const int p = static_cast<int>(beta_axes.size());
    if (coord < 0 || coord >= p) throw InvalidInput("beta_marginal: bad coordinate");
    std::vector<std::vector<double>> wbs;
    for (const auto& ax : beta_axes) wbs.push_back(axis_weights(ax));
    std::vector<double> ts(static_cast<std::size_t>(sigma_axis.size()));
    for (Eigen::Index i = 0; i < sigma_axis.size(); ++i)
        ts[static_cast<std::size_t>(i)] = std::log(sigma_axis[i]);
    const auto wt = quad::trapezoid_weights(ts);

    const auto nc = static_cast<std::size_t>(beta_axes[static_cast<std::size_t>(coord)].size());
    Eigen::VectorXd marg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nc));
    std::size_t nb = 1;
    for (const auto& ax : beta_axes) nb *= static_cast<std::size_t>(ax.size());
    const auto nt = static_cast<std::size_t>(sigma_axis.size());
    for (std::size_t ib = 0; ib < nb; ++ib) {
        double w_other = 1.0;
        std::size_t ic = 0;
        std::size_t rem = ib;
        for (int k = p; k-- > 0;) {
            const auto nk = static_cast<std::size_t>(beta_axes[static_cast<std::size_t>(k)].size());
            const std::size_t i = rem % nk;
            if (k == coord) ic = i;
            else w_other *= wbs[static_cast<std::size_t>(k)][i];
            rem /= nk;
        }
        for (std::size_t j = 0; j < nt; ++j)
            marg[static_cast<Eigen::Index>(ic)] += values[ib * nt + j] *
                sigma_axis[static_cast<Eigen::Index>(j)] * w_other * wt[j];
    }
    return marg;
}

Eigen::VectorXd PosteriorGrid::beta_marginal_cdf(int coord) const {
    const Eigen::VectorXd dens = beta_marginal(coord);
    const Eigen::VectorXd& ax = beta_axes[static_cast<std::size_t>(coord)];
    Eigen::VectorXd cdf(ax.size());
    cdf[0] = 0.0;
    for (Eigen::Index i = 1; i < ax.size(); ++i)
        cdf[i] = cdf[i - 1] + (dens[i] + dens[i - 1]) / 2 * (ax[i] - ax[i - 1]);
    const double tot = cdf[ax.size() - 1];
    if (tot > 0) cdf /= tot;
    return cdf;
}

nlohmann::json PosteriorGrid::summary_json() const {
    const GridSummary s = summarize();
    nlohmann::json j;
    j["log_marginal"] = log_marginal;
    j["boundary_mass"] = boundary_mass;
    j["beta_mean"] = std::vector<double>(s.beta_mean.data(), s.beta_mean.data() + s.beta_mean.size());
    j["beta_sd"] = std::vector<double>(s.beta_sd.data(), s.beta_sd.data() + s.beta_sd.size());
    j["sigma_mean"] = s.sigma_mean;
    j["sigma_sd"] = s.sigma_sd;
    j["log_sigma_mean"] = s.log_sigma_mean;
    j["log_sigma_sd"] = s.log_sigma_sd;
    j["peak_density"] = s.peak_density;
    j["grid_points"] = values.size();
    return j;
}

PosteriorGrid grid_posterior(const RegressionProblem& prob, double omega,
                             std::span<const int> subset,
                             const GridResolution& res_in, Exec exec) {
    const int p = prob.p();
    if (p > 2) throw InvalidInput("grid_posterior: unsupported dimension, p must be <= 2");
    if (!(omega >= 0.0)) throw InvalidInput("grid_posterior: omega must be >= 0");
    const GridResolution res = clamp_counts(res_in);

    std::vector<int> sub(subset.begin(), subset.end());
    const KernelFn kernel = make_kernel(prob, omega, sub, /*prenormalize=*/true);

    std::vector<double> spikes;
    if (p == 1) spikes = spike_centers_1d(prob, sub, omega);
    const Anchor anc = ols_anchor(prob);
    const Ranges rg = determine_ranges(prob, kernel, spikes, res, exec);

    TensorGrid g;
    for (int k = 0; k < p; ++k) {
        const auto [lo, hi] = rg.beta[static_cast<std::size_t>(k)];
        if (p == 1) {
            g.beta_axes.push_back(bulk_beta_axis(lo, hi, res.beta_bulk_points,
                                                 spikes, anc.scale,
                                                 res.cluster_per_decade));
        } else {
            auto v = quad::linspace(lo, hi, res.beta_bulk_points_2d);
            v.push_back(0.0);  // prior kink plane
            g.beta_axes.push_back(merge_axis(std::move(v)));
        }
    }
    g.t_axis = sigma_t_axis(rg.sigma_lo, rg.sigma_hi, res.sigma_per_decade);
    finalize_weights(g);
    evaluate_grid(g, kernel, exec);

    for (std::size_t i = 0; i < g.log_vals.size(); ++i) {
        if (std::isnan(g.log_vals[i]) || g.log_vals[i] == kInf) {
            const auto nt = static_cast<std::size_t>(g.t_axis.size());
            throw InvalidInput(
                "grid_posterior: non-finite kernel at grid point (flat beta index " +
                std::to_string(i / nt) + ", sigma index " + std::to_string(i % nt) + ")");
        }
    }

    const double log_z_pre = log_trapezoid_integral(g);
    if (!std::isfinite(log_z_pre))
        throw InvalidInput("grid_posterior: kernel integrates to zero on the grid");

    // Normalizing constant of the plain (un-prenormalized) kernel.
    double offset = 0.0;
    for (int i : sub)
        if (prob.b[i] != 0.0)
            offset += prob.error.log_pdf(prob.a[i] + prob.b[i] * omega);

    PosteriorGrid out;
    out.beta_axes = g.beta_axes;
    out.sigma_axis.resize(g.t_axis.size());
    for (Eigen::Index i = 0; i < g.t_axis.size(); ++i)
        out.sigma_axis[i] = std::exp(g.t_axis[i]);
    out.log_marginal = log_z_pre + offset;
    out.values.resize(g.log_vals.size());
    for (std::size_t i = 0; i < g.log_vals.size(); ++i)
        out.values[i] = std::exp(g.log_vals[i] - log_z_pre);
    out.boundary_mass = outer_layer_mass(g, log_z_pre);
    return out;
}

// ---------------------------------------------------------------------------
// Marginal split: near/far partition of int h relative to int k_K.

namespace {

struct Interval {
    double lo, hi;
    double center;  // spike center inside (residual zero of the outlier)
};

// Far intervals in beta for p = 1: union over outliers of
// { |y_i - x_i beta| < |y_i|/2 }.
std::vector<Interval> far_intervals_1d(const RegressionProblem& prob, double omega) {
    std::vector<Interval> iv;
    for (int i : prob.outliers) {
        const double xi = prob.x(i, 0);
        const double y = prob.a[i] + prob.b[i] * omega;
        if (xi == 0.0 || y == 0.0) continue;
        const double c = y / xi;
        const double half = std::fabs(y) / (2 * std::fabs(xi));
        iv.push_back({c - half, c + half, c});
    }
    std::sort(iv.begin(), iv.end(), [](auto& l, auto& r) { return l.lo < r.lo; });
    // merge overlaps; keep the first spike center of each merged run
    std::vector<Interval> merged;
    for (const auto& v : iv) {
        if (!merged.empty() && v.lo <= merged.back().hi)
            merged.back().hi = std::max(merged.back().hi, v.hi);
        else
            merged.push_back(v);
    }
    return merged;
}

// Log-spaced axis inside a far interval, clustered toward the spike center.
Eigen::VectorXd far_axis_1d(const Interval& iv, double sigma_lo, int per_decade) {
    const double half = std::max(iv.hi - iv.center, iv.center - iv.lo);
    const double r_min = std::max(sigma_lo * 1e-2, half * 1e-14);
    const int n = std::max(static_cast<int>(std::ceil(
                      per_decade * std::log10(half / r_min))), 8);
    const auto offs = quad::log_spaced(r_min, half, n);
    std::vector<double> pts{iv.center, iv.lo, iv.hi};
    for (double o : offs) {
        if (iv.center + o <= iv.hi) pts.push_back(iv.center + o);
        if (iv.center - o >= iv.lo) pts.push_back(iv.center - o);
    }
    return merge_axis(std::move(pts));
}

// Log-spaced bridge between the bulk edge and a far-interval edge (both on
// the same side of the bulk center).
Eigen::VectorXd bridge_axis(double from, double to, double center, int per_decade) {
    const double d0 = std::max(std::fabs(from - center), 1e-12);
    const double d1 = std::fabs(to - center);
    if (d1 <= d0 * 1.0000001) {
        return merge_axis({std::min(from, to), std::max(from, to)});
    }
    const int n = std::max(static_cast<int>(std::ceil(per_decade * std::log10(d1 / d0))), 4);
    const auto ds = quad::log_spaced(d0, d1, n);
    const double sgn = (to > from) ? 1.0 : -1.0;
    std::vector<double> pts{from, to};
    for (double d : ds) pts.push_back(center + sgn * d);
    std::vector<double> clipped;
    const double lo = std::min(from, to), hi = std::max(from, to);
    for (double v : pts) clipped.push_back(std::clamp(v, lo, hi));
    return merge_axis(std::move(clipped));
}

double segment_log_mass(const RegressionProblem& prob, const KernelFn& kernel,
                        Eigen::VectorXd axis, const Eigen::VectorXd& t_axis,
                        Exec exec) {
    if (axis.size() < 2) return -kInf;
    TensorGrid g;
    g.beta_axes.push_back(std::move(axis));
    g.t_axis = t_axis;
    finalize_weights(g);
    evaluate_grid(g, kernel, exec);
    return log_trapezoid_integral(g);
}

MarginalSplit marginal_split_1d(const RegressionProblem& prob, double omega,
                                const GridResolution& res, Exec exec) {
    std::vector<int> all = prob.all_indices();
    const KernelFn h = make_kernel(prob, omega, all, /*prenormalize=*/true);
    const KernelFn kK = make_kernel(prob, omega, prob.inliers, false);

    // Leave-outliers-out marginal from the bulk grid.
    const Anchor anc = ols_anchor(prob);
    std::vector<double> k_spikes = spike_centers_1d(prob, prob.inliers, omega);
    const Ranges rg = determine_ranges(prob, kK, k_spikes, res, exec);
    const auto [blo, bhi] = rg.beta[0];

    const Eigen::VectorXd t_bulk = sigma_t_axis(rg.sigma_lo, rg.sigma_hi,
                                                res.sigma_per_decade);
    const double log_zk = segment_log_mass(
        prob, kK,
        bulk_beta_axis(blo, bhi, res.beta_bulk_points, k_spikes, anc.scale,
                       res.cluster_per_decade),
        t_bulk, exec);

    // Partition the beta line into near segments and far intervals.
    const auto far = far_intervals_1d(prob, omega);
    // sigma axis for far segments reaches the sigma ~ |y| regime
    double y_max = 1.0;
    for (int i : prob.outliers)
        y_max = std::max(y_max, std::fabs(prob.a[i] + prob.b[i] * omega));
    const Eigen::VectorXd t_far = sigma_t_axis(
        rg.sigma_lo, std::max(rg.sigma_hi, 100 * y_max),
        std::max(res.sigma_per_decade / 2, 4));

    std::vector<double> log_near_parts, log_far_parts;

    // Near segments: complement of the far union, truncated at the far
    // horizon (mass beyond decays like the prior tail and is negligible
    // relative to every reported quantity).
    double domain_lo = blo, domain_hi = bhi;
    for (const auto& iv : far) {
        domain_lo = std::min(domain_lo, iv.lo);
        domain_hi = std::max(domain_hi, iv.hi);
    }
    const double bulk_center = anc.center[0];

    std::vector<std::pair<double, double>> near_segs;
    double cursor = domain_lo;
    for (const auto& iv : far) {
        if (iv.lo > cursor) near_segs.emplace_back(cursor, iv.lo);
        cursor = std::max(cursor, iv.hi);
    }
    if (cursor < domain_hi) near_segs.emplace_back(cursor, domain_hi);
    if (near_segs.empty()) near_segs.emplace_back(blo, bhi);

    const int bridge_pd = std::max(res.cluster_per_decade / 2, 6);
    for (auto [lo, hi] : near_segs) {
        // portion overlapping the bulk window: dense grid
        const double o_lo = std::max(lo, blo), o_hi = std::min(hi, bhi);
        if (o_lo < o_hi) {
            log_near_parts.push_back(segment_log_mass(
                prob, h,
                bulk_beta_axis(o_lo, o_hi, res.beta_bulk_points, k_spikes,
                               anc.scale, res.cluster_per_decade),
                t_bulk, exec));
        }
        // log-spaced bridges for the parts outside the bulk window
        if (lo < blo) {
            log_near_parts.push_back(segment_log_mass(
                prob, h, bridge_axis(std::min(hi, blo), lo, bulk_center, bridge_pd),
                t_far, exec));
        }
        if (hi > bhi) {
            log_near_parts.push_back(segment_log_mass(
                prob, h, bridge_axis(std::max(lo, bhi), hi, bulk_center, bridge_pd),
                t_far, exec));
        }
    }

    for (const auto& iv : far) {
        log_far_parts.push_back(segment_log_mass(
            prob, h,
            far_axis_1d(iv, rg.sigma_lo, std::max(res.cluster_per_decade / 2, 6)),
            t_far, exec));
    }

    MarginalSplit out;
    out.log_k_marginal = log_zk;
    const double log_near = quad::log_sum_exp(log_near_parts);
    const double log_far = log_far_parts.empty()
                               ? -kInf
                               : quad::log_sum_exp(log_far_parts);
    out.near_mass = std::exp(log_near - log_zk);
    out.far_mass = std::isfinite(log_far) ? std::exp(log_far - log_zk) : 0.0;
    out.log_marginal_ratio = std::log(out.near_mass + out.far_mass);
    return out;
}

// p = 2: central grid masked by the indicator plus per-outlier slab grids in
// rotated coordinates. Overlapping slabs are disjointified by membership in
// the first containing slab.
MarginalSplit marginal_split_2d(const RegressionProblem& prob, double omega,
                                const GridResolution& res, Exec exec) {
    std::vector<int> all = prob.all_indices();
    const KernelFn h = make_kernel(prob, omega, all, /*prenormalize=*/true);
    const KernelFn kK = make_kernel(prob, omega, prob.inliers, false);

    const Anchor anc = ols_anchor(prob);
    const Ranges rg = determine_ranges(prob, kK, {}, res, exec);
    const Eigen::VectorXd t_bulk = sigma_t_axis(rg.sigma_lo, rg.sigma_hi,
                                                res.sigma_per_decade);

    auto make_bulk = [&](int k) {
        auto v = quad::linspace(rg.beta[static_cast<std::size_t>(k)].first,
                                rg.beta[static_cast<std::size_t>(k)].second,
                                res.beta_bulk_points_2d);
        v.push_back(0.0);
        return merge_axis(std::move(v));
    };

    TensorGrid gk;
    gk.beta_axes = {make_bulk(0), make_bulk(1)};
    gk.t_axis = t_bulk;
    finalize_weights(gk);
    evaluate_grid(gk, kK, exec);
    const double log_zk = log_trapezoid_integral(gk);

    // outlier geometry
    struct Slab {
        Eigen::Vector2d u;  // unit normal (x_i / |x_i|)
        double y;           // observation
        double xnorm;
    };
    std::vector<Slab> slabs;
    for (int i : prob.outliers) {
        Eigen::Vector2d xi = prob.x.row(i).transpose();
        const double y = prob.a[i] + prob.b[i] * omega;
        if (xi.norm() == 0.0 || y == 0.0) continue;
        slabs.push_back({xi.normalized(), y, xi.norm()});
    }
    auto in_far = [&](const Eigen::Vector2d& beta) {
        for (const auto& s : slabs) {
            const double resid = s.y - s.xnorm * s.u.dot(beta);
            if (std::fabs(resid) < std::fabs(s.y) / 2) return true;
        }
        return false;
    };

    // near: central grid restricted to the near region
    TensorGrid gh;
    gh.beta_axes = gk.beta_axes;
    gh.t_axis = t_bulk;
    finalize_weights(gh);
    evaluate_grid(gh, h, exec);
    {
        const auto n0 = static_cast<std::size_t>(gh.beta_axes[0].size());
        const auto n1 = static_cast<std::size_t>(gh.beta_axes[1].size());
        const auto nt = static_cast<std::size_t>(gh.t_axis.size());
        for (std::size_t i0 = 0; i0 < n0; ++i0)
            for (std::size_t i1 = 0; i1 < n1; ++i1) {
                Eigen::Vector2d b(gh.beta_axes[0][static_cast<Eigen::Index>(i0)],
                                  gh.beta_axes[1][static_cast<Eigen::Index>(i1)]);
                if (in_far(b)) {
                    double* row = gh.log_vals.data() + (i0 * n1 + i1) * nt;
                    std::fill(row, row + nt, -kInf);
                }
            }
    }
    const double log_near = log_trapezoid_integral(gh);

    // far: per-slab rotated grids, first-slab ownership
    double y_max = 1.0;
    for (const auto& s : slabs) y_max = std::max(y_max, std::fabs(s.y));
    const Eigen::VectorXd t_far = sigma_t_axis(
        rg.sigma_lo, std::max(rg.sigma_hi, 100 * y_max),
        std::max(res.sigma_per_decade / 2, 4));

    std::vector<double> log_far_parts;
    for (std::size_t si = 0; si < slabs.size(); ++si) {
        const Slab& s = slabs[si];
        // coordinates: beta = (c + r/xnorm) u + v w, residual = -r... with
        // s.y - xnorm*(c + r/xnorm) = -r when c = y/xnorm
        const double c = s.y / s.xnorm;
        const double half = std::fabs(s.y) / (2 * s.xnorm);
        Eigen::Vector2d w(-s.u[1], s.u[0]);
        const Interval iv{c - half, c + half, c};
        Eigen::VectorXd u_axis = far_axis_1d(iv, rg.sigma_lo,
                                             std::max(res.cluster_per_decade / 4, 4));
        // transverse axis: symmetric log spacing out to 10 |y|
        const double v_hi = 10 * std::fabs(s.y) / s.xnorm + 10 * anc.scale;
        const int nv = std::max(res.beta_bulk_points_2d / 2, 33);
        auto vmag = quad::log_spaced(anc.scale * 1e-3, v_hi, nv);
        std::vector<double> v_pts{0.0};
        for (double v : vmag) {
            v_pts.push_back(v);
            v_pts.push_back(-v);
        }
        Eigen::VectorXd v_axis = merge_axis(std::move(v_pts));

        TensorGrid gf;
        gf.beta_axes = {u_axis, v_axis};
        gf.t_axis = t_far;
        finalize_weights(gf);
        // evaluate with rotation; mask to first-slab ownership
        const auto nu = static_cast<std::size_t>(u_axis.size());
        const auto nv2 = static_cast<std::size_t>(v_axis.size());
        const auto nt = static_cast<std::size_t>(t_far.size());
        gf.log_vals.assign(nu * nv2 * nt, -kInf);
        std::vector<double> sigmas(nt);
        for (std::size_t j = 0; j < nt; ++j) sigmas[j] = std::exp(t_far[static_cast<Eigen::Index>(j)]);
        const auto n_cols = static_cast<long long>(nu * nv2);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
        for (long long col = 0; col < n_cols; ++col) {
            const std::size_t iu = static_cast<std::size_t>(col) / nv2;
            const std::size_t iv2 = static_cast<std::size_t>(col) % nv2;
            Eigen::Vector2d beta = u_axis[static_cast<Eigen::Index>(iu)] * s.u +
                                   v_axis[static_cast<Eigen::Index>(iv2)] * w;
            // ownership: in this slab, and in no earlier slab
            const double resid = s.y - s.xnorm * s.u.dot(beta);
            if (std::fabs(resid) >= std::fabs(s.y) / 2) continue;
            bool owned = true;
            for (std::size_t sj = 0; sj < si && owned; ++sj) {
                const Slab& o = slabs[sj];
                if (std::fabs(o.y - o.xnorm * o.u.dot(beta)) < std::fabs(o.y) / 2)
                    owned = false;
            }
            if (!owned) continue;
            double* row = gf.log_vals.data() + static_cast<std::size_t>(col) * nt;
            Eigen::VectorXd bv = beta;
            for (std::size_t j = 0; j < nt; ++j) row[j] = h(bv, sigmas[j]);
        }
        log_far_parts.push_back(log_trapezoid_integral(gf));
    }

    MarginalSplit out;
    out.log_k_marginal = log_zk;
    out.near_mass = std::exp(log_near - log_zk);
    const double log_far = log_far_parts.empty() ? -kInf
                                                 : quad::log_sum_exp(log_far_parts);
    out.far_mass = std::isfinite(log_far) ? std::exp(log_far - log_zk) : 0.0;
    out.log_marginal_ratio = std::log(out.near_mass + out.far_mass);
    return out;
}

} // namespace

MarginalSplit marginal_split(const RegressionProblem& prob, double omega,
                             const GridResolution& res_in, Exec exec) {
    const GridResolution res = clamp_counts(res_in);
    if (prob.p() > 2)
        throw InvalidInput("marginal_split: unsupported dimension, p must be <= 2");
    if (!(omega >= 0.0)) throw InvalidInput("marginal_split: omega must be >= 0");

    if (prob.outliers.empty()) {
        // h and k_K are the same function; the ratio is exactly zero
        MarginalSplit out;
        out.log_k_marginal =
            grid_posterior(prob, omega, prob.inliers, res, exec).log_marginal;
        out.near_mass = 1.0;
        out.far_mass = 0.0;
        out.log_marginal_ratio = 0.0;
        return out;
    }
    return prob.p() == 1 ? marginal_split_1d(prob, omega, res, exec)
                         : marginal_split_2d(prob, omega, res, exec);
}

double log_marginal_ratio(const RegressionProblem& prob, double omega,
                          const GridResolution& res, Exec exec) {
    return marginal_split(prob, omega, res, exec).log_marginal_ratio;
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis

namespace {

struct Rng {
    std::mt19937_64 gen;
    std::normal_distribution<double> gauss;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double normal() { return gauss(gen); }
    double uniform() {
        return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
    }
};

} // namespace

McmcChain mcmc_posterior(const RegressionProblem& prob, double omega,
                         std::span<const int> subset, const McmcOptions& opt) {
    if (opt.n_draws < 1000)
        throw InvalidInput("mcmc_posterior: n_draws must be >= 1000");
    const int p = prob.p();
    const int d = p + 1;
    std::vector<int> sub(subset.begin(), subset.end());

    auto target = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd beta = u.head(p);
        const double t = u[p];
        return model::log_kernel(prob, beta, std::exp(t), omega, sub, true) + t;
    };

    const Anchor anc = ols_anchor(prob);
    Eigen::VectorXd u(d);
    u.head(p) = anc.center;
    u[p] = std::log(std::max(anc.scale, 1e-8));

    Rng rng(opt.seed);
    double lp = target(u);
    int attempts = 0;
    while (!std::isfinite(lp)) {
        if (++attempts > 1000)
            throw InvalidInput("mcmc_posterior: start-point search failed after 1000 attempts");
        for (int k = 0; k < d; ++k) u[k] += rng.normal();
        lp = target(u);
    }

    const int n_warm = opt.warmup >= 0 ? opt.warmup : opt.n_draws / 2;
    double log_scale = std::log(0.5);
    Eigen::VectorXd rel = Eigen::VectorXd::Ones(d);

    std::vector<Eigen::VectorXd> warm_states;
    warm_states.reserve(static_cast<std::size_t>(n_warm));
    for (int i = 0; i < n_warm; ++i) {
        Eigen::VectorXd prop = u;
        for (int k = 0; k < d; ++k)
            prop[k] += std::exp(log_scale) * rel[k] * rng.normal();
        const double lpp = target(prop);
        const bool acc = std::log(rng.uniform()) < lpp - lp;
        if (acc) {
            u = prop;
            lp = lpp;
        }
        log_scale += ((acc ? 1.0 : 0.0) - opt.target_accept) / std::sqrt(1.0 + i);
        warm_states.push_back(u);
        if (i == n_warm / 2 && i > 10) {
            // set relative scales from the second quarter of warmup
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            const int from = n_warm / 4;
            for (int j = from; j <= i; ++j) mean += warm_states[static_cast<std::size_t>(j)];
            mean /= (i - from + 1);
            Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
            for (int j = from; j <= i; ++j)
                var += (warm_states[static_cast<std::size_t>(j)] - mean).cwiseAbs2();
            var /= (i - from + 1);
            for (int k = 0; k < d; ++k)
                rel[k] = std::max(std::sqrt(var[k]), 1e-3);
            log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
        }
    }

    McmcChain chain;
    chain.seed = opt.seed;
    chain.draws.resize(opt.n_draws, d);
    int accepted = 0;
    for (int i = 0; i < opt.n_draws; ++i) {
        Eigen::VectorXd prop = u;
        for (int k = 0; k < d; ++k)
            prop[k] += std::exp(log_scale) * rel[k] * rng.normal();
        const double lpp = target(prop);
        if (std::log(rng.uniform()) < lpp - lp) {
            u = prop;
            lp = lpp;
            ++accepted;
        }
        chain.draws.row(i).head(p) = u.head(p).transpose();
        chain.draws(i, p) = std::exp(u[p]);
    }
    chain.acceptance_rate = static_cast<double>(accepted) / opt.n_draws;

    chain.ess.resize(d);
    for (int k = 0; k < d; ++k) {
        std::vector<double> col(static_cast<std::size_t>(opt.n_draws));
        for (int i = 0; i < opt.n_draws; ++i) col[static_cast<std::size_t>(i)] = chain.draws(i, k);
        chain.ess[k] = effective_sample_size(col);
    }
    chain.low_ess_warning = chain.ess.minCoeff() < opt.min_ess;
    return chain;
}

Eigen::VectorXd McmcChain::mean() const {
    return draws.colwise().mean();
}

Eigen::VectorXd McmcChain::sd() const {
    Eigen::VectorXd m = mean();
    Eigen::VectorXd s(draws.cols());
    for (Eigen::Index k = 0; k < draws.cols(); ++k)
        s[k] = std::sqrt((draws.col(k).array() - m[k]).square().sum() /
                         (static_cast<double>(draws.rows()) - 1));
    return s;
}

nlohmann::json McmcChain::summary_json() const {
    nlohmann::json j;
    Eigen::VectorXd m = mean(), s = sd();
    j["mean"] = std::vector<double>(m.data(), m.data() + m.size());
    j["sd"] = std::vector<double>(s.data(), s.data() + s.size());
    j["ess"] = std::vector<double>(ess.data(), ess.data() + ess.size());
    j["acceptance_rate"] = acceptance_rate;
    j["seed"] = seed;
    j["n_draws"] = draws.rows();
    j["low_ess_warning"] = low_ess_warning;
    return j;
}

double effective_sample_size(std::span<const double> x) {
    const auto n = x.size();
    if (n < 10) return static_cast<double>(n);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = x[i] - mean;
    const std::size_t max_lag = std::min<std::size_t>(n - 2, 2000);
    std::vector<double> acov(max_lag + 1, 0.0);
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        double s = 0;
        for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
        acov[lag] = s / static_cast<double>(n);
    }
    if (acov[0] <= 0) return static_cast<double>(n);
    // Geyer initial positive sequence on paired autocovariances
    double tau = -acov[0];
    for (std::size_t k = 0; 2 * k + 1 <= max_lag; ++k) {
        const double g = acov[2 * k] + acov[2 * k + 1];
        if (g <= 0) break;
        tau += 2 * g;
    }
    tau = std::max(tau / acov[0], 1.0);
    return static_cast<double>(n) / tau;
}

double gelman_rubin(const std::vector<McmcChain>& chains, int column) {
    if (chains.size() < 2) throw InvalidInput("gelman_rubin: need at least 2 chains");
    const auto m = chains.size();
    const auto n = static_cast<double>(chains.front().draws.rows());
    std::vector<double> means, vars;
    for (const auto& ch : chains) {
        if (ch.draws.rows() != chains.front().draws.rows())
            throw InvalidInput("gelman_rubin: chains must share a common length");
        const auto col = ch.draws.col(column);
        const double mu = col.mean();
        means.push_back(mu);
        vars.push_back((col.array() - mu).square().sum() / (n - 1));
    }
    double grand = 0;
    for (double mu : means) grand += mu;
    grand /= static_cast<double>(m);
    double b_over_n = 0;
    for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
    b_over_n /= static_cast<double>(m - 1);
    double w = 0;
    for (double v : vars) w += v;
    w /= static_cast<double>(m);
    if (w <= 0) return 1.0;
    const double var_plus = (n - 1) / n * w + b_over_n;
    return std::sqrt(var_plus / w);
}

} // namespace robustlr::posterior

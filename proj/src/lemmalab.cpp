#include "robustlr/lemmalab.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "robustlr/errors.hpp"

namespace robustlr::lemmalab {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void require_dims(const LemmaInstance& inst) {
    if (inst.p < 1 || inst.m < 1) throw InvalidInput("LemmaInstance: need p >= 1, m >= 1");
    if (inst.z.rows() != inst.m || inst.z.cols() != inst.p)
        throw InvalidInput("LemmaInstance: z must be m x p");
    if (inst.a.size() != inst.m || inst.b.size() != inst.m)
        throw InvalidInput("LemmaInstance: a and b must have length m");
    if (inst.w.size() != 0 && inst.w.size() != inst.m)
        throw InvalidInput("LemmaInstance: w must be empty or length m");
}

void require_covering_preconditions(const LemmaInstance& inst) {
    require_dims(inst);
    if (inst.m < inst.p + 1)
        throw InvalidInput("verify_covering: need m >= p + 1");
    const auto rep = model::general_position(inst.z, inst.a, inst.b);
    if (!rep.cond_i) throw InvalidInput("verify_covering: general-position condition (i) violated");
    if (!rep.cond_ii) throw InvalidInput("verify_covering: general-position condition (ii) violated");
    if (!rep.cond_iii) throw InvalidInput("verify_covering: general-position condition (iii) violated");
}

void require_product_preconditions(const LemmaInstance& inst) {
    require_dims(inst);
    if (inst.w.size() != inst.m)
        throw InvalidInput("verify_product_bound: instance carries no w vector");
    if (inst.m < inst.p) throw InvalidInput("verify_product_bound: need m >= p");
    const auto rep = model::general_position(inst.z, inst.a, inst.b);
    if (!rep.cond_i)
        throw InvalidInput("verify_product_bound: some p rows of z are dependent (condition (i))");
}

// violation count for the covering property at one beta
int covering_violations(const LemmaInstance& inst, double epsilon, double omega,
                        const Eigen::VectorXd& beta) {
    int count = 0;
    for (int i = 0; i < inst.m; ++i) {
        const double resid = inst.a[i] + inst.b[i] * omega - inst.z.row(i).dot(beta);
        if (std::fabs(resid) <= epsilon) ++count;
    }
    return count;
}

bool product_bound_holds(const LemmaInstance& inst, double R, double delta,
                         const Eigen::VectorXd& beta) {
    double lhs = 0.0;
    for (int i = 0; i < inst.m; ++i)
        lhs -= std::log1p(std::fabs(inst.w[i] - inst.z.row(i).dot(beta)));
    const double rhs = -(inst.m - inst.p + 1) * std::log1p(delta * beta.norm());
    (void)R;
    return lhs <= rhs + 1e-12 * std::max(1.0, std::fabs(rhs));
}

} // namespace

nlohmann::json LemmaInstance::to_json() const {
    nlohmann::json j;
    j["p"] = p;
    j["m"] = m;
    auto rows = nlohmann::json::array();
    for (int i = 0; i < m; ++i) {
        std::vector<double> r(static_cast<std::size_t>(p));
        for (int k = 0; k < p; ++k) r[static_cast<std::size_t>(k)] = z(i, k);
        rows.push_back(r);
    }
    j["z"] = rows;
    j["a"] = std::vector<double>(a.data(), a.data() + a.size());
    j["b"] = std::vector<double>(b.data(), b.data() + b.size());
    if (w.size() > 0) j["w"] = std::vector<double>(w.data(), w.data() + w.size());
    if (!name.empty()) j["name"] = name;
    return j;
}

LemmaInstance LemmaInstance::from_json(const nlohmann::json& j) {
    LemmaInstance inst;
    try {
        inst.p = j.at("p").get<int>();
        inst.m = j.at("m").get<int>();
        const auto& rows = j.at("z");
        inst.z.resize(inst.m, inst.p);
        if (static_cast<int>(rows.size()) != inst.m)
            throw ValidationError("instance: z has wrong row count");
        for (int i = 0; i < inst.m; ++i) {
            const auto& r = rows.at(static_cast<std::size_t>(i));
            if (static_cast<int>(r.size()) != inst.p)
                throw ValidationError("instance: z row " + std::to_string(i) +
                                      " has wrong length");
            for (int k = 0; k < inst.p; ++k) inst.z(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
        }
        auto va = j.at("a").get<std::vector<double>>();
        auto vb = j.at("b").get<std::vector<double>>();
        inst.a = Eigen::Map<Eigen::VectorXd>(va.data(), static_cast<Eigen::Index>(va.size()));
        inst.b = Eigen::Map<Eigen::VectorXd>(vb.data(), static_cast<Eigen::Index>(vb.size()));
        if (j.contains("w")) {
            auto vw = j.at("w").get<std::vector<double>>();
            inst.w = Eigen::Map<Eigen::VectorXd>(vw.data(), static_cast<Eigen::Index>(vw.size()));
        }
        if (j.contains("name")) inst.name = j.at("name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("instance: malformed JSON: ") + e.what());
    }
    require_dims(inst);
    return inst;
}

std::uint64_t LemmaInstance::hash() const {
    nlohmann::json j = to_json();
    j.erase("name");  // provenance is about the data
    return fnv1a(j.dump());
}

LemmaInstance augmented_from_problem(const model::RegressionProblem& prob) {
    LemmaInstance inst;
    inst.p = prob.p();
    inst.m = prob.n() + prob.p();
    inst.z.resize(inst.m, inst.p);
    inst.a.setZero(inst.m);
    inst.b.setZero(inst.m);
    inst.z.topRows(prob.p()) = Eigen::MatrixXd::Identity(prob.p(), prob.p());
    inst.z.bottomRows(prob.n()) = prob.x;
    inst.a.tail(prob.n()) = prob.a;
    inst.b.tail(prob.n()) = prob.b;
    inst.name = "augmented";
    return inst;
}

std::vector<LemmaInstance> builtin_instances() {
    std::vector<LemmaInstance> out;
    auto mk = [](const char* name, int p, int m, std::vector<double> zv,
                 std::vector<double> av, std::vector<double> bv,
                 std::vector<double> wv) {
        LemmaInstance inst;
        inst.p = p;
        inst.m = m;
        inst.z.resize(m, p);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < p; ++k)
                inst.z(i, k) = zv[static_cast<std::size_t>(i * p + k)];
        inst.a = Eigen::Map<Eigen::VectorXd>(av.data(), m);
        inst.b = Eigen::Map<Eigen::VectorXd>(bv.data(), m);
        inst.w = Eigen::Map<Eigen::VectorXd>(wv.data(), m);
        inst.name = name;
        return inst;
    };
    out.push_back(mk("line-pair", 1, 2, {1, 2}, {0, 1}, {0, 1}, {0, 0}));
    out.push_back(mk("line-triple", 1, 3, {1, 2, 3}, {0, 1, 2}, {0, 0, 1},
                     {0.5, -0.5, 1}));
    out.push_back(mk("line-quad", 1, 4, {1, -1, 2, 0.5}, {0.3, -0.7, 1.1, 0.2},
                     {0, 1, 0, -1}, {0.2, 1.0, -0.3, 0.7}));
    out.push_back(mk("plane-triple", 2, 3, {1, 0, 0, 1, 1, 1}, {1, 2, 4},
                     {0, 0, 1}, {0.5, -0.2, 0.9}));
    out.push_back(mk("plane-quad", 2, 4,
                     {1, 0.2, -0.3, 1, 0.8, -0.6, 0.4, 0.9},
                     {0.7, -1.1, 0.4, 1.3}, {0, 1, -0.5, 0},
                     {0.1, -0.8, 0.6, 1.2}));
    out.push_back(mk("plane-five", 2, 5,
                     {1, 0.1, 0.2, 1, -0.7, 0.5, 0.9, 0.8, -0.4, -1.1},
                     {0.5, -0.3, 1.2, -0.9, 0.4}, {0, 0, 1, 0.6, 0},
                     {0.3, 0.9, -0.5, 0.2, -1.0}));
    return out;
}

// ---------------------------------------------------------------------------
// Covering

namespace {

// exact p = 1 check: two residual intervals intersect iff some beta leaves
// two residuals within epsilon
CoveringResult covering_exact_1d(const LemmaInstance& inst, double epsilon,
                                 double omega) {
    CoveringResult res;
    res.exact = true;
    std::vector<std::pair<double, double>> iv;
    for (int i = 0; i < inst.m; ++i) {
        const double zi = inst.z(i, 0);
        const double c = inst.a[i] + inst.b[i] * omega;
        const double lo = (c - epsilon) / zi, hi = (c + epsilon) / zi;
        iv.emplace_back(std::min(lo, hi), std::max(lo, hi));
    }
    for (std::size_t i = 0; i < iv.size(); ++i)
        for (std::size_t j = i + 1; j < iv.size(); ++j) {
            const double lo = std::max(iv[i].first, iv[j].first);
            const double hi = std::min(iv[i].second, iv[j].second);
            if (lo <= hi) {
                Eigen::VectorXd beta(1);
                beta[0] = (lo + hi) / 2;
                // soundness: re-check by direct evaluation
                if (covering_violations(inst, epsilon, omega, beta) > inst.p) {
                    res.pass = false;
                    res.witness = beta;
                    return res;
                }
            }
        }
    res.pass = true;
    return res;
}

std::vector<Eigen::VectorXd> stratified_betas(const LemmaInstance& inst,
                                              double omega,
                                              const SampleOptions& opt) {
    const int p = inst.p;
    const double bmax = inst.b.cwiseAbs().maxCoeff();
    const double amax = inst.a.cwiseAbs().maxCoeff();
    const double r_ball = 2.0 * (omega * bmax + amax) + 10.0;
    const double r_far = 10.0 * std::max(omega * bmax, 1.0) + r_ball;

    std::vector<Eigen::VectorXd> betas;
    betas.reserve(opt.sample_budget + 10000);
    const std::size_t n_grid = opt.sample_budget / 2;
    const std::size_t n_shell = opt.sample_budget / 4;
    const std::size_t n_rand = opt.sample_budget - n_grid - n_shell + 10000;

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    if (p == 1) {
        for (std::size_t i = 0; i < n_grid; ++i) {
            Eigen::VectorXd b(1);
            b[0] = -r_ball + 2 * r_ball * static_cast<double>(i) /
                                 static_cast<double>(n_grid - 1);
            betas.push_back(b);
        }
        for (std::size_t i = 0; i < n_shell; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(n_shell - 1);
            const double r = r_ball * std::pow(r_far / r_ball, t);
            Eigen::VectorXd b(1);
            b[0] = (i % 2 == 0) ? r : -r;
            betas.push_back(b);
        }
        for (std::size_t i = 0; i < n_rand; ++i) {
            Eigen::VectorXd b(1);
            b[0] = unif(rng) * r_far;
            betas.push_back(b);
        }
    } else {
        const auto side = static_cast<std::size_t>(
            std::sqrt(static_cast<double>(n_grid)));
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j) {
                Eigen::VectorXd b(p);
                b.setZero();
                b[0] = -r_ball + 2 * r_ball * static_cast<double>(i) / static_cast<double>(side - 1);
                b[1] = -r_ball + 2 * r_ball * static_cast<double>(j) / static_cast<double>(side - 1);
                betas.push_back(b);
            }
        const std::size_t n_radii = std::max<std::size_t>(n_shell / 64, 8);
        for (std::size_t i = 0; i < n_radii; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(n_radii - 1);
            const double r = r_ball * std::pow(r_far / r_ball, t);
            for (int k = 0; k < 64; ++k) {
                const double ang = 2 * M_PI * k / 64.0;
                Eigen::VectorXd b(p);
                b.setZero();
                b[0] = r * std::cos(ang);
                b[1] = r * std::sin(ang);
                betas.push_back(b);
            }
        }
        for (std::size_t i = 0; i < n_rand; ++i) {
            Eigen::VectorXd b(p);
            for (int k = 0; k < p; ++k) b[k] = unif(rng) * r_far;
            betas.push_back(b);
        }
    }
    return betas;
}

} // namespace

CoveringResult verify_covering(const LemmaInstance& inst, double epsilon,
                               double omega, const SampleOptions& opt) {
    if (!(epsilon > 0.0)) throw InvalidInput("verify_covering: epsilon must be > 0");
    if (!(omega >= 0.0)) throw InvalidInput("verify_covering: omega must be >= 0");
    require_covering_preconditions(inst);

    if (inst.p == 1 && !opt.force_sampled)
        return covering_exact_1d(inst, epsilon, omega);

    const auto betas = stratified_betas(inst, omega, opt);
    CoveringResult res;
    res.exact = false;
    res.samples_checked = betas.size();

    // first-witness index for determinism regardless of thread count
    long long first_bad = -1;
    const auto n = static_cast<long long>(betas.size());
#pragma omp parallel if (opt.exec == Exec::parallel)
    {
        long long local_bad = -1;
#pragma omp for schedule(static) nowait
        for (long long i = 0; i < n; ++i) {
            if (local_bad >= 0) continue;
            if (covering_violations(inst, epsilon, omega,
                                    betas[static_cast<std::size_t>(i)]) > inst.p)
                local_bad = i;
        }
#pragma omp critical
        {
            if (local_bad >= 0 && (first_bad < 0 || local_bad < first_bad))
                first_bad = local_bad;
        }
    }
    if (first_bad >= 0) {
        const auto& beta = betas[static_cast<std::size_t>(first_bad)];
        // soundness re-check
        if (covering_violations(inst, epsilon, omega, beta) > inst.p) {
            res.pass = false;
            res.witness = beta;
            return res;
        }
    }
    res.pass = true;
    return res;
}

nlohmann::json CoveringCertificate::to_json() const {
    nlohmann::json j;
    j["kind"] = "covering";
    j["found"] = found;
    if (found) {
        j["epsilon"] = epsilon;
        j["m_omega"] = m_omega;
        j["checked_omegas"] = checked_omegas;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(instance_hash));
    j["instance_hash"] = std::string(buf);
    if (!instance_name.empty()) j["instance"] = instance_name;
    return j;
}

CoveringCertificate find_epsilon_omega(const LemmaInstance& inst,
                                       const SampleOptions& opt) {
    require_covering_preconditions(inst);
    CoveringCertificate cert;
    cert.instance_hash = inst.hash();
    cert.instance_name = inst.name;

    std::vector<double> eps_grid;
    for (int k = 0; k <= 9; ++k) eps_grid.push_back(std::pow(10.0, -k / 3.0));
    const double m_ladder[] = {1.0, 10.0, 100.0, 1000.0, 10000.0};

    for (double M : m_ladder) {
        for (double eps : eps_grid) {
            bool ok = true;
            std::vector<double> checked;
            for (double f : {1.0, 2.0, 10.0, 100.0}) {
                const double w = M * f;
                if (!verify_covering(inst, eps, w, opt).pass) {
                    ok = false;
                    break;
                }
                checked.push_back(w);
            }
            if (ok) {
                cert.found = true;
                cert.epsilon = eps;
                cert.m_omega = M;
                cert.checked_omegas = checked;
                return cert;
            }
        }
    }
    return cert;  // budget exhausted, not a refutation
}

// ---------------------------------------------------------------------------
// Product bound

ProductBoundResult verify_product_bound(const LemmaInstance& inst, double R,
                                        double delta,
                                        const SampleOptions& opt) {
    if (!(R > 0.0) || !(delta > 0.0))
        throw InvalidInput("verify_product_bound: R and delta must be > 0");
    require_product_preconditions(inst);

    const int p = inst.p;
    std::vector<Eigen::VectorXd> dirs;
    if (p == 1) {
        Eigen::VectorXd e(1);
        e[0] = 1.0;
        dirs.push_back(e);
        e[0] = -1.0;
        dirs.push_back(e);
    } else {
        for (int k = 0; k < 64; ++k) {
            Eigen::VectorXd d(p);
            d.setZero();
            const double ang = 2 * M_PI * k / 64.0;
            d[0] = std::cos(ang);
            d[1] = std::sin(ang);
            dirs.push_back(d);
        }
    }
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> ulog(0.0, 6.0);

    const std::size_t n_radii =
        std::max<std::size_t>(opt.sample_budget / (2 * dirs.size()), 32);
    std::vector<Eigen::VectorXd> betas;
    for (std::size_t i = 0; i < n_radii; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n_radii - 1);
        const double r = R * std::pow(1e6, t);
        for (const auto& d : dirs) betas.push_back(r * d);
    }
    const std::size_t n_rand = opt.sample_budget / 2;
    for (std::size_t i = 0; i < n_rand; ++i) {
        Eigen::VectorXd d(p);
        for (int k = 0; k < p; ++k) d[k] = gauss(rng);
        if (d.norm() == 0) continue;
        d.normalize();
        betas.push_back(R * std::pow(10.0, ulog(rng)) * d);
    }

    ProductBoundResult res;
    res.samples_checked = betas.size();
    long long first_bad = -1;
    const auto n = static_cast<long long>(betas.size());
#pragma omp parallel if (opt.exec == Exec::parallel)
    {
        long long local_bad = -1;
#pragma omp for schedule(static) nowait
        for (long long i = 0; i < n; ++i) {
            if (local_bad >= 0) continue;
            if (!product_bound_holds(inst, R, delta, betas[static_cast<std::size_t>(i)]))
                local_bad = i;
        }
#pragma omp critical
        {
            if (local_bad >= 0 && (first_bad < 0 || local_bad < first_bad))
                first_bad = local_bad;
        }
    }
    if (first_bad >= 0) {
        const auto& beta = betas[static_cast<std::size_t>(first_bad)];
        if (!product_bound_holds(inst, R, delta, beta)) {
            res.pass = false;
            res.witness = beta;
            return res;
        }
    }
    res.pass = true;
    return res;
}

nlohmann::json ProductBoundCertificate::to_json() const {
    nlohmann::json j;
    j["kind"] = "product_bound";
    j["found"] = found;
    if (found) {
        j["r"] = r;
        j["delta"] = delta;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(instance_hash));
    j["instance_hash"] = std::string(buf);
    if (!instance_name.empty()) j["instance"] = instance_name;
    return j;
}

ProductBoundCertificate find_r_delta(const LemmaInstance& inst,
                                     const SampleOptions& opt) {
    require_product_preconditions(inst);
    ProductBoundCertificate cert;
    cert.instance_hash = inst.hash();
    cert.instance_name = inst.name;
    for (int kr = 0; kr <= 16; ++kr) {
        const double R = std::ldexp(1.0, kr);
        for (int kd = 0; kd <= 16; ++kd) {
            const double delta = std::ldexp(1.0, -kd);
            if (verify_product_bound(inst, R, delta, opt).pass) {
                cert.found = true;
                cert.r = R;
                cert.delta = delta;
                return cert;
            }
        }
    }
    return cert;
}

} // namespace robustlr::lemmalab

// robustlr: posterior-robustness experiments for linear regression with a
// super heavy-tailed error density.
//
// Subcommands:
//   check   validate a config and test the robustness hypotheses
//   sweep   run an omega ladder and write JSON/CSV reports
//   lemmas  search covering / product-bound certificates
//
// Exit codes: 0 success, 2 validation failure, 3 criterion failure,
//             4 numerical-budget failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "robustlr/errors.hpp"
#include "robustlr/lemmalab.hpp"
#include "robustlr/model.hpp"
#include "robustlr/posterior.hpp"
#include "robustlr/robustness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitCriterion = 3;
constexpr int kExitBudget = 4;

using robustlr::BudgetExceeded;
using robustlr::InvalidInput;
using robustlr::ValidationError;

struct ConfigEntry {
    std::string value;
    int line = 0;
};

struct RawConfig {
    std::map<std::string, ConfigEntry> kv;
    std::string path;

    const ConfigEntry* find(const std::string& key) const {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    }
    std::string get(const std::string& key, const std::string& fallback) const {
        const auto* e = find(key);
        return e ? e->value : fallback;
    }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const auto* e = find(key);
        std::ostringstream os;
        os << path;
        if (e) os << ":" << e->line;
        os << ": key '" << key << "': " << msg;
        throw ValidationError(os.str());
    }
};

RawConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    RawConfig cfg;
    cfg.path = path;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto notspace = line.find_first_not_of(" \t\r");
        if (notspace == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty key");
        cfg.kv[key] = {val, lineno};
    }
    return cfg;
}

std::vector<double> parse_number_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
        if (pos != tok.size()) throw std::invalid_argument("trailing characters in '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

struct Experiment {
    robustlr::model::RegressionProblem problem;
    double rho = 0.5;
    std::vector<double> omegas;
    robustlr::robustness::SweepMethod method = robustlr::robustness::SweepMethod::grid;
    std::uint64_t seed = 1234;
    int draws = 20000;
    double resolution_scale = 1.0;
};

Experiment build_experiment(const RawConfig& cfg) {
    namespace ht = robustlr::heavytail;
    namespace md = robustlr::model;

    double gamma = 1.0;
    if (const auto* e = cfg.find("gamma")) {
        try {
            gamma = std::stod(e->value);
        } catch (...) {
            cfg.fail("gamma", "not a number");
        }
    }

    // design
    md::DesignData design;
    const std::string source = cfg.get("problem", "builtin:canonical");
    if (source == "builtin:canonical") {
        const auto canon = md::canonical_problem();
        design = {canon.x, canon.a, canon.b};
    } else if (source.rfind("csv:", 0) == 0) {
        design = md::load_design_csv(source.substr(4));
    } else {
        cfg.fail("problem", "expected 'builtin:canonical' or 'csv:<path>'");
    }
    const int p = static_cast<int>(design.x.cols());

    // coefficient prior
    ht::CoefficientPrior cp = ht::CoefficientPrior::per_coordinate_t(
        Eigen::VectorXd::Ones(p));
    if (const auto* e = cfg.find("coeff_prior")) {
        const std::string& v = e->value;
        try {
            if (v.rfind("percoordt:", 0) == 0) {
                auto nus = parse_number_list(v.substr(10));
                Eigen::VectorXd nv;
                if (static_cast<int>(nus.size()) == 1) {
                    nv = Eigen::VectorXd::Constant(p, nus[0]);
                } else if (static_cast<int>(nus.size()) == p) {
                    nv = Eigen::Map<Eigen::VectorXd>(nus.data(),
                                                     static_cast<Eigen::Index>(nus.size()));
                } else {
                    cfg.fail("coeff_prior", "nu list length must be 1 or p");
                }
                cp = ht::CoefficientPrior::per_coordinate_t(nv);
            } else if (v.rfind("mvt:", 0) == 0) {
                cp = ht::CoefficientPrior::multivariate_t(p, std::stod(v.substr(4)));
            } else {
                cfg.fail("coeff_prior", "expected 'percoordt:<nus>' or 'mvt:<nu>'");
            }
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& ex) {
            cfg.fail("coeff_prior", ex.what());
        }
    }

    // scale prior
    ht::ScalePrior sp = ht::ScalePrior::half_cauchy(1.0);
    if (const auto* e = cfg.find("scale_prior")) {
        const std::string& v = e->value;
        try {
            if (v.rfind("halfcauchy:", 0) == 0) {
                sp = ht::ScalePrior::half_cauchy(std::stod(v.substr(11)));
            } else if (v.rfind("invgamma:", 0) == 0) {
                auto ps = parse_number_list(v.substr(9));
                if (ps.size() != 2) cfg.fail("scale_prior", "invgamma needs shape,rate");
                sp = ht::ScalePrior::inverse_gamma(ps[0], ps[1]);
            } else if (v.rfind("lognormal:", 0) == 0) {
                auto ps = parse_number_list(v.substr(10));
                if (ps.size() != 2) cfg.fail("scale_prior", "lognormal needs mu,s");
                sp = ht::ScalePrior::log_normal(ps[0], ps[1]);
            } else {
                cfg.fail("scale_prior",
                         "expected 'halfcauchy:<s>', 'invgamma:<a,b>' or 'lognormal:<mu,s>'");
            }
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& ex) {
            cfg.fail("scale_prior", ex.what());
        }
    }

    Experiment exp{md::make_problem(design.x, design.a, design.b,
                                    ht::LptnDensity(gamma), cp, sp)};

    if (const auto* e = cfg.find("rho")) {
        try {
            exp.rho = std::stod(e->value);
        } catch (...) {
            cfg.fail("rho", "not a number");
        }
        if (!(exp.rho > 0)) cfg.fail("rho", "must be > 0");
    }

    exp.omegas = {1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12};
    if (const auto* e = cfg.find("omega_ladder")) {
        try {
            exp.omegas = parse_number_list(e->value);
        } catch (const std::exception& ex) {
            cfg.fail("omega_ladder", ex.what());
        }
    }

    const std::string method = cfg.get("method", "grid");
    if (method == "grid") {
        exp.method = robustlr::robustness::SweepMethod::grid;
    } else if (method == "mcmc") {
        exp.method = robustlr::robustness::SweepMethod::mcmc;
    } else {
        cfg.fail("method", "expected 'grid' or 'mcmc'");
    }

    if (const auto* e = cfg.find("seed")) {
        try {
            exp.seed = static_cast<std::uint64_t>(std::stoull(e->value));
        } catch (...) {
            cfg.fail("seed", "not an integer");
        }
    }
    if (const auto* e = cfg.find("draws")) {
        try {
            exp.draws = std::stoi(e->value);
        } catch (...) {
            cfg.fail("draws", "not an integer");
        }
    }
    if (const auto* e = cfg.find("resolution")) {
        try {
            exp.resolution_scale = std::stod(e->value);
        } catch (...) {
            cfg.fail("resolution", "not a number");
        }
        if (!(exp.resolution_scale > 0)) cfg.fail("resolution", "must be > 0");
    }
    return exp;
}

struct CheckOutcome {
    bool condition = false, general_position = false, prior_bound = false,
         moment = false;
    bool all() const { return condition && general_position && prior_bound && moment; }
};

CheckOutcome run_check(const Experiment& exp, std::ostream& os) {
    namespace ht = robustlr::heavytail;
    CheckOutcome out;

    const auto cond = robustlr::model::robustness_condition(exp.problem);
    out.condition = cond.holds;
    os << "hypothesis                         status  detail\n";
    os << "|K| >= |L| + p                     " << (cond.holds ? "PASS " : "FAIL ")
       << "  margin = " << cond.margin;
    if (!cond.holds) os << "  (outside theorem: sweeps are watermarked)";
    os << "\n";

    const auto gp = robustlr::model::general_position(exp.problem);
    out.general_position = gp.all();
    os << "general position (i)-(iii)         " << (gp.all() ? "PASS " : "FAIL ")
       << "  i=" << gp.cond_i << " ii=" << gp.cond_ii << " iii=" << gp.cond_iii << "\n";

    const auto cert = ht::verify_prior_bound(exp.problem.coeff_prior);
    out.prior_bound = cert.certified;
    os << "conditional prior bound (M, nu*)   " << (cert.certified ? "PASS " : "FAIL ")
       << "  M = " << cert.m << ", nu* = " << cert.nu_star
       << (cert.exact ? " (exact)" : " (grid search)") << "\n";

    const auto mom = ht::scale_moment_check(exp.problem.scale_prior, exp.rho);
    out.moment = mom.finite();
    os << "scale moment, rho = " << exp.rho << "            "
       << (mom.finite() ? "PASS " : "FAIL ") << "  analytic "
       << (mom.analytic_finite ? "finite" : "infinite") << ", numeric "
       << (mom.numeric_finite ? "finite" : "infinite");
    if (mom.numeric_finite && mom.analytic_finite)
        os << ", estimate = " << mom.estimate;
    os << "\n";
    return out;
}

int cmd_check(const std::string& config_path,
              const std::vector<std::string>& overrides) {
    RawConfig cfg = parse_config_file(config_path);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + ov + "'");
        cfg.kv[ov.substr(0, eq)] = {ov.substr(eq + 1), 0};
    }
    const Experiment exp = build_experiment(cfg);
    const CheckOutcome out = run_check(exp, std::cout);
    return out.all() ? kExitOk : kExitCriterion;
}

robustlr::posterior::GridResolution posterior_resolution(const Experiment& exp) {
    robustlr::posterior::GridResolution res;
    return res.scaled(exp.resolution_scale);
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& overrides, bool force,
              const std::string& json_out, const std::string& csv_out) {
    namespace rb = robustlr::robustness;
    RawConfig cfg = parse_config_file(config_path);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + ov + "'");
        cfg.kv[ov.substr(0, eq)] = {ov.substr(eq + 1), 0};
    }
    const Experiment exp = build_experiment(cfg);

    const CheckOutcome chk = run_check(exp, std::cout);
    if (!chk.all() && !force) {
        std::cerr << "hypothesis check failed; pass --force to sweep anyway\n";
        return kExitCriterion;
    }

    rb::SweepOptions opt;
    opt.method = exp.method;
    opt.resolution = posterior_resolution(exp);
    opt.mcmc.n_draws = exp.draws;
    opt.mcmc.seed = exp.seed;

    const auto k_grid = robustlr::posterior::grid_posterior(
        exp.problem, exp.omegas.front(), exp.problem.inliers, opt.resolution);
    const auto pts = rb::default_eval_points(exp.problem, k_grid);
    const auto rep = rb::sweep(exp.problem, exp.omegas, pts, opt);

    if (!json_out.empty()) {
        std::ofstream os(json_out);
        if (!os) throw ValidationError("cannot write " + json_out);
        os << rep.to_json().dump(2) << "\n";
        std::cout << "wrote " << json_out << "\n";
    }
    if (!csv_out.empty()) {
        std::ofstream os(csv_out);
        if (!os) throw ValidationError("cannot write " + csv_out);
        rep.write_csv(os);
        std::cout << "wrote " << csv_out << "\n";
    }

    // convergence criterion: peak-normalized distances strictly decreasing
    // and below 0.1 at the top of the ladder
    bool decreasing = true;
    for (std::size_t i = 1; i < rep.pointwise_sup_dist.size(); ++i)
        if (!(rep.pointwise_sup_dist[i] < rep.pointwise_sup_dist[i - 1]))
            decreasing = false;
    const bool small_at_top = rep.pointwise_sup_dist.back() < 0.1;
    std::cout << "sweep: sup distance " << rep.pointwise_sup_dist.front()
              << " -> " << rep.pointwise_sup_dist.back()
              << (decreasing ? " (strictly decreasing)" : " (NOT strictly decreasing)")
              << "\n";
    if (rep.outside_theorem) {
        std::cout << "watermark: condition margin " << rep.condition_margin
                  << " < 0, outside theorem; no convergence verdict\n";
        return kExitOk;
    }
    return (decreasing && small_at_top) ? kExitOk : kExitCriterion;
}

int cmd_lemmas(const std::string& instances_path, const std::string& out_dir,
               std::uint64_t seed, std::size_t budget) {
    namespace ll = robustlr::lemmalab;
    std::vector<ll::LemmaInstance> insts = ll::builtin_instances();
    if (!instances_path.empty()) {
        std::ifstream in(instances_path);
        if (!in) throw ValidationError("cannot open " + instances_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(instances_path + ": " + e.what());
        }
        const auto& arr = j.is_array() ? j : j.at("instances");
        for (const auto& ij : arr) insts.push_back(ll::LemmaInstance::from_json(ij));
    }

    std::filesystem::create_directories(out_dir);
    ll::SampleOptions opt;
    opt.seed = seed;
    opt.sample_budget = budget;

    bool budget_exhausted = false;
    for (const auto& inst : insts) {
        const std::string tag =
            inst.name.empty() ? std::to_string(inst.hash()) : inst.name;
        const auto cov = ll::find_epsilon_omega(inst, opt);
        {
            std::ofstream os(out_dir + "/covering_" + tag + ".json");
            os << cov.to_json().dump(2) << "\n";
        }
        std::cout << "covering " << tag << ": "
                  << (cov.found ? "certificate (epsilon = " + std::to_string(cov.epsilon) +
                                      ", M = " + std::to_string(cov.m_omega) + ")"
                                : "inconclusive (budget)")
                  << "\n";
        if (!cov.found) budget_exhausted = true;

        if (inst.w.size() == inst.m) {
            const auto pb = ll::find_r_delta(inst, opt);
            std::ofstream os(out_dir + "/product_" + tag + ".json");
            os << pb.to_json().dump(2) << "\n";
            std::cout << "product " << tag << ": "
                      << (pb.found ? "certificate (R = " + std::to_string(pb.r) +
                                         ", delta = " + std::to_string(pb.delta) + ")"
                                   : "inconclusive (budget)")
                      << "\n";
            if (!pb.found) budget_exhausted = true;
        }
    }
    return budget_exhausted ? kExitBudget : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"posterior robustness for heavy-tailed Bayesian linear regression"};
    app.require_subcommand(1);

    std::string config_path, json_out, csv_out, instances_path, out_dir = "certificates";
    std::vector<std::string> overrides;
    bool force = false;
    std::uint64_t seed = 1234;
    std::size_t budget = 100000;

    auto* check = app.add_subcommand("check", "validate config and hypotheses");
    check->add_option("--config", config_path, "key = value config file")->required();
    check->add_option("--set", overrides, "override a config key (key=value)");

    auto* sweep = app.add_subcommand("sweep", "run an omega ladder");
    sweep->add_option("--config", config_path, "key = value config file")->required();
    sweep->add_option("--set", overrides, "override a config key (key=value)");
    sweep->add_flag("--force", force, "sweep even if the hypothesis check fails");
    sweep->add_option("--out-json", json_out, "write the report as JSON");
    sweep->add_option("--out-csv", csv_out, "write (omega, distances, envelope) CSV");
    sweep->add_option("--method", [&overrides](const std::vector<std::string>& v) {
        overrides.push_back("method=" + v.front());
        return true;
    }, "grid or mcmc");
    sweep->add_option("--seed", [&overrides](const std::vector<std::string>& v) {
        overrides.push_back("seed=" + v.front());
        return true;
    }, "rng seed");
    sweep->add_option("--omega-ladder", [&overrides](const std::vector<std::string>& v) {
        overrides.push_back("omega_ladder=" + v.front());
        return true;
    }, "comma-separated omegas");

    auto* lemmas = app.add_subcommand("lemmas", "covering / product-bound certificates");
    lemmas->add_option("--instances", instances_path, "JSON file with extra instances");
    lemmas->add_option("--out-dir", out_dir, "certificate output directory");
    lemmas->add_option("--seed", seed, "rng seed");
    lemmas->add_option("--budget", budget, "beta samples per (epsilon, omega) pair");

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) return cmd_check(config_path, overrides);
        if (sweep->parsed())
            return cmd_sweep(config_path, overrides, force, json_out, csv_out);
        if (lemmas->parsed()) return cmd_lemmas(instances_path, out_dir, seed, budget);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << "\n";
        return kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}

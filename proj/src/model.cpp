#include "robustlr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/SVD>

#include "robustlr/errors.hpp"

namespace robustlr::model {

std::vector<int> RegressionProblem::all_indices() const {
    std::vector<int> idx(static_cast<std::size_t>(n()));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

RegressionProblem make_problem(Eigen::MatrixXd x, Eigen::VectorXd a,
                               Eigen::VectorXd b, heavytail::LptnDensity error,
                               heavytail::CoefficientPrior coeff_prior,
                               heavytail::ScalePrior scale_prior) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (n < 1 || p < 1) throw InvalidInput("make_problem: need n >= 1 and p >= 1");
    if (a.size() != n || b.size() != n)
        throw InvalidInput("make_problem: a and b must have length n");
    if (!x.allFinite() || !a.allFinite() || !b.allFinite())
        throw InvalidInput("make_problem: non-finite entry in x, a or b");
    if (coeff_prior.dimension() != p)
        throw InvalidInput("make_problem: coefficient prior dimension != p");

    RegressionProblem prob{std::move(x), std::move(a), std::move(b),
                           error, std::move(coeff_prior), std::move(scale_prior),
                           {}, {}};
    for (int i = 0; i < prob.n(); ++i)
        (prob.b[i] == 0.0 ? prob.inliers : prob.outliers).push_back(i);
    return prob;
}

RegressionProblem canonical_problem() {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd a(5), b(5);
    a << -1.0, -0.5, 0.0, 0.5, 1.0;
    b << 0.0, 0.0, 0.0, 0.0, 1.0;
    return make_problem(std::move(x), std::move(a), std::move(b),
                        heavytail::LptnDensity(1.0),
                        heavytail::CoefficientPrior::per_coordinate_t(
                            Eigen::VectorXd::Ones(1)),
                        heavytail::ScalePrior::half_cauchy(1.0));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        // trim
        const auto b = cur.find_first_not_of(" \t\r");
        const auto e = cur.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_number(const std::string& tok, int row, const std::string& col) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw ValidationError("row " + std::to_string(row) + ", column " + col +
                              ": cannot parse '" + tok + "' as a number");
    }
    if (pos != tok.size())
        throw ValidationError("row " + std::to_string(row) + ", column " + col +
                              ": trailing characters in '" + tok + "'");
    if (!std::isfinite(v))
        throw ValidationError("row " + std::to_string(row) + ", column " + col +
                              ": non-finite value");
    return v;
}

} // namespace

DesignData load_design_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 3)
        throw ValidationError(path + ": header must be x1,...,xp,a,b");
    const int p = static_cast<int>(header.size()) - 2;
    for (int k = 0; k < p; ++k) {
        const std::string want = "x" + std::to_string(k + 1);
        if (header[static_cast<std::size_t>(k)] != want)
            throw ValidationError(path + ": expected header column '" + want +
                                  "', found '" + header[static_cast<std::size_t>(k)] + "'");
    }
    if (header[static_cast<std::size_t>(p)] != "a")
        throw ValidationError(path + ": missing column 'a'");
    if (header[static_cast<std::size_t>(p) + 1] != "b")
        throw ValidationError(path + ": missing column 'b'");

    std::vector<std::vector<double>> rows;
    int rownum = 1;
    while (std::getline(in, line)) {
        ++rownum;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto toks = split_csv_line(line);
        if (toks.size() != header.size())
            throw ValidationError("row " + std::to_string(rownum) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(toks.size()));
        std::vector<double> vals;
        vals.reserve(toks.size());
        for (std::size_t k = 0; k < toks.size(); ++k)
            vals.push_back(parse_number(toks[k], rownum, header[k]));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ValidationError(path + ": no data rows");

    DesignData d;
    const int n = static_cast<int>(rows.size());
    d.x.resize(n, p);
    d.a.resize(n);
    d.b.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < p; ++k) d.x(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        d.a[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
        d.b[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(p) + 1];
    }
    return d;
}

Eigen::VectorXd observations_at(const RegressionProblem& prob, double omega) {
    if (!(omega >= 0.0)) throw InvalidInput("observations_at: omega must be >= 0");
    return prob.a + prob.b * omega;
}

double log_kernel(const RegressionProblem& prob, const Eigen::VectorXd& beta,
                  double sigma, double omega, std::span<const int> subset,
                  bool prenormalize_outliers) {
    if (!(sigma > 0.0)) throw InvalidInput("log_kernel: sigma must be > 0");
    if (beta.size() != prob.p()) throw InvalidInput("log_kernel: beta dimension mismatch");
    const double log_sigma = std::log(sigma);
    double s = prob.coeff_prior.log_pdf(beta, sigma) +
               prob.scale_prior.log_pdf(sigma);
    for (int i : subset) {
        if (i < 0 || i >= prob.n()) throw InvalidInput("log_kernel: subset index out of range");
        const double y = prob.a[i] + prob.b[i] * omega;
        const double resid = y - prob.x.row(i).dot(beta);
        s += prob.error.log_pdf(resid / sigma) - log_sigma;
        if (prenormalize_outliers && prob.b[i] != 0.0)
            s -= prob.error.log_pdf(y);
    }
    return s;
}

ConditionCheck robustness_condition(const RegressionProblem& prob) {
    ConditionCheck c;
    c.margin = static_cast<int>(prob.inliers.size()) -
               static_cast<int>(prob.outliers.size()) - prob.p();
    c.holds = c.margin >= 0;
    return c;
}

namespace {

// Enumerates k-subsets of {0..n-1} in lexicographic order.
bool next_subset(std::vector<int>& idx, int n) {
    const int k = static_cast<int>(idx.size());
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return false;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    return true;
}

bool invertible(const Eigen::MatrixXd& m, double tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return false;
    return sv(sv.size() - 1) > tol * sv(0);
}

double n_choose_k(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r *= static_cast<double>(n - k + i) / i;
    return r;
}

constexpr std::size_t kMaxWitnesses = 32;

} // namespace

GeneralPositionReport general_position(const Eigen::MatrixXd& z,
                                       const Eigen::VectorXd& a,
                                       const Eigen::VectorXd& b, double tol) {
    const int n = static_cast<int>(z.rows());
    const int p = static_cast<int>(z.cols());
    if (a.size() != n || b.size() != n)
        throw InvalidInput("general_position: a and b must have length n");
    if (n < p) throw InvalidInput("general_position: need n >= p");
    if (n_choose_k(n, p) > 1e6 || (n >= p + 1 && n_choose_k(n, p + 1) > 1e6))
        throw BudgetExceeded("general_position: subset enumeration exceeds 1e6");

    GeneralPositionReport rep;

    // (i): p-subsets of rows
    rep.cond_i = true;
    {
        std::vector<int> idx(static_cast<std::size_t>(p));
        std::iota(idx.begin(), idx.end(), 0);
        do {
            Eigen::MatrixXd m(p, p);
            for (int r = 0; r < p; ++r) m.row(r) = z.row(idx[static_cast<std::size_t>(r)]);
            if (!invertible(m, tol)) {
                rep.cond_i = false;
                if (rep.witnesses_i.size() < kMaxWitnesses) rep.witnesses_i.push_back(idx);
            }
        } while (next_subset(idx, n));
    }

    // (ii)/(iii): (p+1)-subsets augmented with the a- resp. b-column
    rep.cond_ii = true;
    rep.cond_iii = true;
    if (n >= p + 1) {
        std::vector<int> idx(static_cast<std::size_t>(p) + 1);
        std::iota(idx.begin(), idx.end(), 0);
        do {
            Eigen::MatrixXd m(p + 1, p + 1);
            bool all_b_zero = true;
            for (int r = 0; r <= p; ++r) {
                const int i = idx[static_cast<std::size_t>(r)];
                m.block(r, 0, 1, p) = z.row(i);
                if (b[i] != 0.0) all_b_zero = false;
            }
            for (int r = 0; r <= p; ++r) m(r, p) = a[idx[static_cast<std::size_t>(r)]];
            if (!invertible(m, tol)) {
                rep.cond_ii = false;
                if (rep.witnesses_ii.size() < kMaxWitnesses) rep.witnesses_ii.push_back(idx);
            }
            if (!all_b_zero) {
                for (int r = 0; r <= p; ++r) m(r, p) = b[idx[static_cast<std::size_t>(r)]];
                if (!invertible(m, tol)) {
                    rep.cond_iii = false;
                    if (rep.witnesses_iii.size() < kMaxWitnesses) rep.witnesses_iii.push_back(idx);
                }
            }
        } while (next_subset(idx, n));
    }
    return rep;
}

GeneralPositionReport general_position(const RegressionProblem& prob, double tol) {
    return general_position(prob.x, prob.a, prob.b, tol);
}

} // namespace robustlr::model

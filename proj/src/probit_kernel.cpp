#include "ordinv/probit_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>

namespace ordinv {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Interval {
    double prob = 0.0;
    double pdf_upper = 0.0;  // density at the standardized upper bound
    double pdf_lower = 0.0;
};

// P(lower < Z <= upper), differencing in whichever tail keeps precision.
Interval standard_interval(double lower, double upper) {
    Interval out;
    if (upper <= 0.0) {
        out.prob = normal_cdf(upper) - normal_cdf(lower);
    } else if (lower >= 0.0) {
        out.prob = normal_cdf(-lower) - normal_cdf(-upper);
    } else {
        out.prob = 1.0 - normal_cdf(lower) - normal_cdf(-upper);
    }
    out.pdf_upper = std::isfinite(upper) ? normal_pdf(upper) : 0.0;
    out.pdf_lower = std::isfinite(lower) ? normal_pdf(lower) : 0.0;
    return out;
}

double log_sum_exp(std::span<const double> s) {
    double m = kNegInf;
    for (double v : s) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - m);
    return m + std::log(acc);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

QuadratureRule gauss_hermite(int n) {
    if (n < 3 || n % 2 == 0) throw std::invalid_argument("gauss_hermite: point count must be odd and >= 3");
    // Golub-Welsch eigenvalues of the Jacobi matrix for the probabilists'
    // Hermite polynomials, polished by Newton on the orthonormal recurrence.
    // Weights are reciprocal Christoffel sums 1 / sum_k p_k(x)^2.
    const auto un = static_cast<std::size_t>(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& guess = solver.eigenvalues();

    // Orthonormal p_0..p_n at x; returns p_n and fills p_{n-1} and sum p_k^2 for k < n.
    auto evaluate = [n](double x, double& prev, double& christoffel) {
        double p0 = 1.0, p1 = x;
        christoffel = 1.0;
        for (int k = 1; k < n; ++k) {
            christoffel += p1 * p1;
            const double p2 = (x * p1 - std::sqrt(static_cast<double>(k)) * p0) / std::sqrt(k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        prev = p0;
        return p1;
    };

    std::vector<double> x(un), w(un);
    const std::size_t half = un / 2;
    for (std::size_t i = half + 1; i < un; ++i) {
        double z = guess(static_cast<Eigen::Index>(i));
        double prev = 0.0, christoffel = 1.0;
        for (int it = 0; it < 20; ++it) {
            const double pn = evaluate(z, prev, christoffel);
            const double step = pn / (std::sqrt(static_cast<double>(n)) * prev);
            z -= step;
            if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        evaluate(z, prev, christoffel);
        x[i] = z;
        x[un - 1 - i] = -z;
        w[i] = w[un - 1 - i] = 1.0 / christoffel;
    }
    double prev = 0.0, christoffel = 1.0;
    evaluate(0.0, prev, christoffel);
    x[half] = 0.0;
    w[half] = 1.0 / christoffel;

    QuadratureRule rule;
    rule.nodes = std::move(x);
    rule.weights = std::move(w);
    const double total = pairwise_sum(rule.weights);
    for (auto& v : rule.weights) v /= total;
    return rule;
}

void check_thresholds(std::span<const double> thresholds) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        if (!std::isfinite(thresholds[k])) throw std::invalid_argument("threshold is not finite");
        if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
            throw std::invalid_argument("thresholds must be strictly increasing");
        }
    }
}

double category_probability(double loading, std::span<const double> thresholds, double residual_variance,
                            double eta, int category, double intercept) {
    check_thresholds(thresholds);
    if (!(residual_variance > 0.0)) throw std::invalid_argument("residual variance must be positive");
    const int n_cat = static_cast<int>(thresholds.size()) + 1;
    if (category < 1 || category > n_cat) throw std::invalid_argument("category out of range");
    const double sd = std::sqrt(residual_variance);
    const double center = intercept + loading * eta;
    const auto k = static_cast<std::size_t>(category);
    const double upper = category == n_cat ? std::numeric_limits<double>::infinity() : (thresholds[k - 1] - center) / sd;
    const double lower = category == 1 ? -std::numeric_limits<double>::infinity() : (thresholds[k - 2] - center) / sd;
    return standard_interval(lower, upper).prob;
}

double respondent_loglik(std::span<const Response> responses, const GroupParameters& group,
                         const QuadratureRule& rule, std::span<const double> latent_intercepts) {
    if (responses.size() != group.loadings.size()) throw std::invalid_argument("response count mismatch");
    bool any = false;
    for (auto y : responses) any = any || y != kMissing;
    if (!any) return 0.0;

    const double scale = std::sqrt(group.latent_variance);
    std::vector<double> s(rule.count());
    for (std::size_t q = 0; q < rule.count(); ++q) {
        const double eta = group.latent_mean + scale * rule.nodes[q];
        double acc = std::log(rule.weights[q]);
        for (std::size_t j = 0; j < responses.size(); ++j) {
            if (responses[j] == kMissing) continue;
            const double nu = latent_intercepts.empty() ? 0.0 : latent_intercepts[j];
            acc += std::log(category_probability(group.loadings[j], group.thresholds[j], group.residual_variances[j],
                                                 eta, responses[j], nu));
        }
        s[q] = acc;
    }
    return log_sum_exp(s);
}

struct LikelihoodKernel::Tables {
    // Indexed ((item * max_categories) + category) * nodes + node.
    std::vector<double> log_prob;
    std::vector<double> d_upper;  // pdf(upper) / (sd * P)
    std::vector<double> d_lower;  // pdf(lower) / (sd * P)
    std::vector<double> eta;
};

LikelihoodKernel::LikelihoodKernel(const OrdinalDataset& dataset, QuadratureRule rule)
    : rule_(std::move(rule)),
      n_items_(dataset.n_items()),
      n_covariates_(dataset.covariate_names.size()),
      n_groups_(dataset.n_groups()) {
    for (const auto& item : dataset.items) {
        n_categories_.push_back(item.n_categories);
        max_categories_ = std::max(max_categories_, static_cast<std::size_t>(item.n_categories));
    }
    const std::size_t n = dataset.rows.size();
    group_.reserve(n);
    responses_.reserve(n * n_items_);
    outcome_.reserve(n);
    covariates_.reserve(n * n_covariates_);
    for (const auto& row : dataset.rows) {
        group_.push_back(row.group_index);
        for (auto y : row.responses) responses_.push_back(y == kMissing ? Response{-1} : static_cast<Response>(y - 1));
        bool complete = row.outcome.has_value() && row.covariates.size() == n_covariates_;
        for (std::size_t c = 0; c < n_covariates_; ++c) {
            const double v = c < row.covariates.size() ? row.covariates[c] : std::nan("");
            complete = complete && std::isfinite(v);
            covariates_.push_back(v);
        }
        outcome_.push_back(complete ? *row.outcome : std::nan(""));
    }
}

LikelihoodKernel::Tables LikelihoodKernel::build_tables(const ParameterSet& params, std::size_t g) const {
    const auto& gp = params.groups[g];
    const std::size_t nq = rule_.count();
    Tables t;
    t.eta.resize(nq);
    const double scale = std::sqrt(gp.latent_variance);
    for (std::size_t q = 0; q < nq; ++q) t.eta[q] = gp.latent_mean + scale * rule_.nodes[q];

    const std::size_t size = n_items_ * max_categories_ * nq;
    t.log_prob.assign(size, kNegInf);
    t.d_upper.assign(size, 0.0);
    t.d_lower.assign(size, 0.0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_items_; ++j) {
        const auto& tau = gp.thresholds[j];
        const double sd = std::sqrt(gp.residual_variances[j]);
        const double nu = params.latent_intercepts.empty() ? 0.0 : params.latent_intercepts[j];
        const auto n_cat = static_cast<std::size_t>(n_categories_[j]);
        for (std::size_t k = 0; k < n_cat; ++k) {
            for (std::size_t q = 0; q < nq; ++q) {
                const double center = nu + gp.loadings[j] * t.eta[q];
                const double upper = k + 1 == n_cat ? inf : (tau[k] - center) / sd;
                const double lower = k == 0 ? -inf : (tau[k - 1] - center) / sd;
                const Interval iv = standard_interval(lower, upper);
                const std::size_t idx = (j * max_categories_ + k) * nq + q;
                if (iv.prob > 0.0) {
                    t.log_prob[idx] = std::log(iv.prob);
                    t.d_upper[idx] = iv.pdf_upper / (sd * iv.prob);
                    t.d_lower[idx] = iv.pdf_lower / (sd * iv.prob);
                }
            }
        }
    }
    return t;
}

double LikelihoodKernel::evaluate(const ParameterSet& params, ParameterSet* gradient,
                                  std::vector<double>* terms) const {
    if (params.groups.size() != n_groups_) throw std::invalid_argument("parameter set group count mismatch");
    for (const auto& gp : params.groups) {
        if (gp.loadings.size() != n_items_) throw std::invalid_argument("parameter set item count mismatch");
        for (std::size_t j = 0; j < n_items_; ++j) {
            if (gp.thresholds[j].size() + 1 != static_cast<std::size_t>(n_categories_[j])) {
                throw std::invalid_argument("threshold count does not match item categories");
            }
        }
    }
    const std::size_t nq = rule_.count();
    std::vector<double> log_w(nq);
    for (std::size_t q = 0; q < nq; ++q) log_w[q] = std::log(rule_.weights[q]);

    std::vector<Tables> tables;
    tables.reserve(n_groups_);
    for (std::size_t g = 0; g < n_groups_; ++g) tables.push_back(build_tables(params, g));

    // Expected posterior counts per group, same indexing as the tables.
    std::vector<std::vector<double>> counts;
    if (gradient) {
        *gradient = params;
        for (auto& gp : gradient->groups) {
            std::fill(gp.loadings.begin(), gp.loadings.end(), 0.0);
            for (auto& t : gp.thresholds) std::fill(t.begin(), t.end(), 0.0);
            gp.latent_mean = 0.0;
            gp.latent_variance = 0.0;
            std::fill(gp.residual_variances.begin(), gp.residual_variances.end(), 0.0);
            if (gp.structural) {
                gp.structural->intercept = 0.0;
                gp.structural->slope = 0.0;
                std::fill(gp.structural->covariate_effects.begin(), gp.structural->covariate_effects.end(), 0.0);
                gp.structural->residual_variance = 0.0;
            }
        }
        std::fill(gradient->latent_intercepts.begin(), gradient->latent_intercepts.end(), 0.0);
        counts.assign(n_groups_, std::vector<double>(n_items_ * max_categories_ * nq, 0.0));
    }

    const std::size_t n = group_.size();
    std::vector<double> ll(n, 0.0);
    std::vector<double> s(nq), post(nq), resid(nq);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(group_[i]);
        const Tables& t = tables[g];
        const auto& gp = params.groups[g];
        const Response* y = responses_.data() + i * n_items_;
        const StructuralParameters* sp = gp.structural ? &*gp.structural : nullptr;
        const bool with_outcome = sp != nullptr && std::isfinite(outcome_[i]);

        bool any = with_outcome;
        std::copy(log_w.begin(), log_w.end(), s.begin());
        for (std::size_t j = 0; j < n_items_; ++j) {
            if (y[j] < 0) continue;
            any = true;
            const double* lp = t.log_prob.data() + (j * max_categories_ + static_cast<std::size_t>(y[j])) * nq;
            for (std::size_t q = 0; q < nq; ++q) s[q] += lp[q];
        }
        if (!any) continue;

        if (with_outcome) {
            double fixed_part = outcome_[i] - sp->intercept;
            const double* x = covariates_.data() + i * n_covariates_;
            for (std::size_t c = 0; c < n_covariates_; ++c) fixed_part -= sp->covariate_effects[c] * x[c];
            const double psi = sp->residual_variance;
            const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * psi);
            for (std::size_t q = 0; q < nq; ++q) {
                resid[q] = fixed_part - sp->slope * t.eta[q];
                s[q] += log_norm - 0.5 * resid[q] * resid[q] / psi;
            }
        }

        double m = kNegInf;
        for (double v : s) m = std::max(m, v);
        if (!std::isfinite(m)) {
            ll[i] = kNegInf;
            continue;
        }
        double acc = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            post[q] = std::exp(s[q] - m);
            acc += post[q];
        }
        ll[i] = m + std::log(acc);

        if (!gradient) continue;
        for (auto& v : post) v /= acc;
        auto& cnt = counts[g];
        for (std::size_t j = 0; j < n_items_; ++j) {
            if (y[j] < 0) continue;
            double* c = cnt.data() + (j * max_categories_ + static_cast<std::size_t>(y[j])) * nq;
            for (std::size_t q = 0; q < nq; ++q) c[q] += post[q];
        }
        if (with_outcome) {
            double e1 = 0.0, e2 = 0.0, e3 = 0.0, e4 = 0.0;
            for (std::size_t q = 0; q < nq; ++q) {
                e1 += post[q] * resid[q];
                e2 += post[q] * resid[q] * t.eta[q];
                e3 += post[q] * resid[q] * resid[q];
                e4 += post[q] * resid[q] * rule_.nodes[q];
            }
            const double psi = sp->residual_variance;
            auto& gs = *gradient->groups[g].structural;
            gs.intercept += e1 / psi;
            gs.slope += e2 / psi;
            const double* x = covariates_.data() + i * n_covariates_;
            for (std::size_t c = 0; c < n_covariates_; ++c) gs.covariate_effects[c] += x[c] * e1 / psi;
            gs.residual_variance += -0.5 / psi + 0.5 * e3 / (psi * psi);
            gradient->groups[g].latent_mean += sp->slope * e1 / psi;
            gradient->groups[g].latent_variance += sp->slope * e4 / psi / (2.0 * std::sqrt(gp.latent_variance));
        }
    }

    if (gradient) {
        for (std::size_t g = 0; g < n_groups_; ++g) {
            const Tables& t = tables[g];
            const auto& gp = params.groups[g];
            auto& gg = gradient->groups[g];
            const auto& cnt = counts[g];
            const double half_inv_sd = 0.5 / std::sqrt(gp.latent_variance);
            double d_mean = 0.0, d_var = 0.0;
            for (std::size_t j = 0; j < n_items_; ++j) {
                const auto n_cat = static_cast<std::size_t>(n_categories_[j]);
                double d_load = 0.0;
                for (std::size_t k = 0; k < n_cat; ++k) {
                    const std::size_t base = (j * max_categories_ + k) * nq;
                    double d_up = 0.0, d_lo = 0.0;
                    for (std::size_t q = 0; q < nq; ++q) {
                        const double c = cnt[base + q];
                        if (c == 0.0) continue;
                        const double slope_term = c * (t.d_lower[base + q] - t.d_upper[base + q]);
                        d_load += slope_term * t.eta[q];
                        d_mean += slope_term * gp.loadings[j];
                        d_var += slope_term * gp.loadings[j] * rule_.nodes[q] * half_inv_sd;
                        d_up += c * t.d_upper[base + q];
                        d_lo += c * t.d_lower[base + q];
                    }
                    if (k + 1 < n_cat) gg.thresholds[j][k] += d_up;
                    if (k > 0) gg.thresholds[j][k - 1] -= d_lo;
                }
                gg.loadings[j] = d_load;
            }
            gg.latent_mean += d_mean;
            gg.latent_variance += d_var;
        }
    }

    const double total = pairwise_sum(ll);
    if (terms) *terms = std::move(ll);
    return total;
}

double LikelihoodKernel::loglik(const ParameterSet& params) const { return evaluate(params, nullptr, nullptr); }

double LikelihoodKernel::loglik_gradient(const ParameterSet& params, ParameterSet& gradient) const {
    return evaluate(params, &gradient, nullptr);
}

std::vector<double> LikelihoodKernel::respondent_terms(const ParameterSet& params) const {
    std::vector<double> terms;
    evaluate(params, nullptr, &terms);
    return terms;
}

double total_loglik(const OrdinalDataset& dataset, const ParameterSet& params, const QuadratureRule& rule) {
    return LikelihoodKernel(dataset, rule).loglik(params);
}

}  // namespace ordinv

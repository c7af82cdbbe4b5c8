#pragma once

#include <span>
#include <vector>

#include "ordinv/data_model.hpp"

namespace ordinv {

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

/// Gauss-Hermite rule for the standard normal density: nodes symmetric about
/// zero, weights summing to one.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t count() const { return nodes.size(); }
};

/// Throws std::invalid_argument unless n is odd and >= 3.
QuadratureRule gauss_hermite(int n);

/// Throws std::invalid_argument when thresholds are not strictly increasing.
void check_thresholds(std::span<const double> thresholds);

/// P(y = category | eta) under the probit latent response model, with
/// category in 1..K and K = thresholds.size() + 1.
double category_probability(double loading, std::span<const double> thresholds, double residual_variance,
                            double eta, int category, double intercept = 0.0);

/// Marginal log-likelihood of one respondent's responses (kMissing entries are
/// skipped). `latent_intercepts` may be empty.
double respondent_loglik(std::span<const Response> responses, const GroupParameters& group,
                         const QuadratureRule& rule, std::span<const double> latent_intercepts = {});

/// Precomputes per-(item, node, category) probabilities for a ParameterSet, so a
/// likelihood evaluation costs O(N * nodes * items) additions.
class LikelihoodKernel {
public:
    LikelihoodKernel(const OrdinalDataset& dataset, QuadratureRule rule);

    const QuadratureRule& rule() const { return rule_; }
    std::size_t n_rows() const { return group_.size(); }

    /// Sum over respondents (pairwise summation in row order). The outcome enters
    /// for rows with an observed outcome and complete covariates whenever the
    /// group carries structural parameters.
    double loglik(const ParameterSet& params) const;

    /// Same value as loglik(); `gradient` receives d loglik / d parameter, with
    /// the shape of `params`. Residual-variance and intercept slots are left 0.
    double loglik_gradient(const ParameterSet& params, ParameterSet& gradient) const;

    /// Per-respondent contributions in row order.
    std::vector<double> respondent_terms(const ParameterSet& params) const;

private:
    struct Tables;
    Tables build_tables(const ParameterSet& params, std::size_t g) const;
    double evaluate(const ParameterSet& params, ParameterSet* gradient, std::vector<double>* terms) const;

    QuadratureRule rule_;
    std::size_t n_items_ = 0;
    std::size_t max_categories_ = 0;
    std::size_t n_covariates_ = 0;
    std::vector<int> n_categories_;
    std::vector<int> group_;
    std::vector<Response> responses_;  // row-major, 0-based category or -1
    std::vector<double> outcome_;      // NaN when absent or covariates incomplete
    std::vector<double> covariates_;   // row-major
    std::size_t n_groups_ = 0;
};

double total_loglik(const OrdinalDataset& dataset, const ParameterSet& params, const QuadratureRule& rule);

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

}  // namespace ordinv

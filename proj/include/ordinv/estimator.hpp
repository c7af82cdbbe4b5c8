#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ordinv/data_model.hpp"
#include "ordinv/probit_kernel.hpp"

namespace ordinv {

/// Maps the free coordinates of a ConstraintSet to an unconstrained vector.
/// Thresholds become (first threshold, log gaps); variances become logs.
class ParameterMap {
public:
    explicit ParameterMap(ConstraintSet constraints);

    const ConstraintSet& constraints() const { return constraints_; }
    const std::vector<Coordinate>& free_coordinates() const { return free_; }
    std::size_t size() const { return free_.size(); }

    Eigen::VectorXd pack(const ParameterSet& params) const;
    ParameterSet unpack(const Eigen::VectorXd& theta) const;

    /// Chain rule from a natural-space gradient (as produced by LikelihoodKernel)
    /// to the unconstrained vector, folding ties onto their targets.
    Eigen::VectorXd pull_back(const ParameterSet& natural_gradient, const Eigen::VectorXd& theta) const;

    /// d(free natural coordinate) / d(theta), rows and columns in free order.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const;

private:
    enum class Transform { identity, log, first_threshold, threshold_gap };
    Transform transform_of(const Coordinate& c) const;

    ConstraintSet constraints_;
    std::vector<Coordinate> free_;
    ParameterSet shape_;
};

/// Raised by callers that need a converged fit to continue.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    double relative_tolerance = 1e-10;
    int stall_window = 3;
    /// Floor for accepting a stalled run as converged: max(stall_gradient_floor, |loglik| * 1e-8).
    double stall_gradient_floor = 1e-4;
    bool compute_standard_errors = true;
    std::optional<ParameterSet> start;
};

struct FitResult {
    ParameterSet params;
    double loglik = 0.0;
    std::size_t n_free = 0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    double gradient_tolerance = 0.0;  // bound that gradient_norm met when converged
    std::string message;
    /// Natural-unit standard errors aligned with free_coordinates; nullopt when unavailable.
    std::vector<std::optional<double>> standard_errors;
    /// Natural-unit covariance of the free coordinates (empty when not computed).
    Eigen::MatrixXd covariance;
    std::vector<Coordinate> free_coordinates;
    ConstraintSet constraints;
    ModelSpec spec_echo;
    std::vector<std::string> group_labels;
    std::vector<ItemDescriptor> items;
    std::vector<double> loglik_trace;  // one entry per accepted iteration

    /// Index into free_coordinates, or -1.
    int free_index(const Coordinate& c) const;
    /// Like free_index, but a tied coordinate resolves to its target.
    int resolved_index(const Coordinate& c) const;
    std::optional<double> standard_error(const Coordinate& c) const;
};

/// Starting values: loadings 0.8, thresholds from per-group cumulative
/// proportions through the probit inverse, latent means 0, variances 1.
ParameterSet starting_values(const OrdinalDataset& model_data, const ConstraintSet& constraints);

/// Maximizes the marginal likelihood of `spec` over its free coordinates.
/// Never throws for non-convergence; check FitResult::converged.
FitResult fit(const OrdinalDataset& dataset, const ModelSpec& spec, const FitOptions& options = {});

struct StandardErrors {
    std::vector<std::optional<double>> se;
    Eigen::MatrixXd covariance;
    bool positive_definite = false;
};

/// Inverse of the central-difference Hessian of -loglik at the fitted optimum.
StandardErrors standard_errors(const FitResult& fit, const OrdinalDataset& dataset);

struct LrtResult {
    double loglik_restricted = 0.0;
    double loglik_unrestricted = 0.0;
    double raw_delta_chisq = 0.0;  // before clamping at 0
    double delta_chisq = 0.0;
    int delta_df = 0;
    double p_value = 1.0;
};

/// Upper tail of the chi-square distribution.
double chisq_sf(double x, int df);

LrtResult lrt(const FitResult& restricted, const FitResult& unrestricted);

/// Likelihood-ratio arithmetic without the nesting checks.
LrtResult lrt_from_logliks(double loglik_restricted, double loglik_unrestricted, int delta_df);

}  // namespace ordinv

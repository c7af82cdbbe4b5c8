#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ordinv/data_model.hpp"
#include "ordinv/estimator.hpp"
#include "ordinv/probit_kernel.hpp"

namespace ordinv {

struct ThresholdDiffRow {
    std::string item;
    ItemRole role = ItemRole::child_rearing;
    int threshold = 1;  // 1-based
    double tau_focal = 0.0;
    double tau_reference = 0.0;
    double delta = 0.0;  // tau_focal - tau_reference
    std::optional<double> se;
    bool operator==(const ThresholdDiffRow&) const = default;
};

struct ThresholdDiffTable {
    std::string reference_group;
    std::string focal_group;
    std::vector<ThresholdDiffRow> rows;
    bool operator==(const ThresholdDiffTable&) const = default;
};

/// Focal minus reference thresholds for every (item, threshold) of the fit.
/// `focal` defaults to the first non-reference group. SEs use the joint
/// covariance of the two thresholds when the fit carries one.
ThresholdDiffTable threshold_differences(const FitResult& fit, int focal = -1);

/// Same differences from bare parameters (no SEs).
ThresholdDiffTable threshold_differences(const ParameterSet& params, const std::vector<ItemDescriptor>& items,
                                         const std::vector<std::string>& group_labels, int reference, int focal);

struct LatentGap {
    std::string reference_group;
    std::string focal_group;
    double estimate = 0.0;
    std::optional<double> se;
    bool operator==(const LatentGap&) const = default;
};

/// Focal latent mean relative to the reference mean (fixed at 0). Throws when
/// the focal mean is not a free coordinate of the fit.
LatentGap latent_gap(const FitResult& fit, int focal = -1);

struct EapScore {
    double score = 0.0;
    double sd = 0.0;
    bool operator==(const EapScore&) const = default;
};

/// Posterior mean and SD of eta for each row, in row order. `dataset` must
/// carry exactly the items of `params`.
std::vector<EapScore> eap_scores(const ParameterSet& params, const OrdinalDataset& dataset,
                                 const QuadratureRule& rule);

/// EAP scores under a fitted model (items selected from the fit's spec).
std::vector<EapScore> eap_scores(const FitResult& fit, const OrdinalDataset& dataset);

enum class StructuralMode { two_step, joint };
std::string to_string(StructuralMode mode);
StructuralMode parse_structural_mode(const std::string& text);

struct StructuralOptions {
    StructuralMode mode = StructuralMode::joint;
    /// z-score the outcome over rows with complete outcome and covariates.
    bool standardize_outcome = false;
    /// Group-specific slopes need this many complete rows in every group.
    int min_rows_per_group = 30;
    int focal = -1;
    FitOptions fit;
};

struct PolicyEffect {
    std::string outcome;
    StructuralMode mode = StructuralMode::joint;
    std::vector<std::string> group_labels;
    std::string reference_group;
    std::string focal_group;
    bool pooled = false;
    std::vector<double> beta;  // per group; equal entries when pooled
    std::vector<std::optional<double>> beta_se;
    double beta_used = 0.0;  // reference-group slope
    std::optional<double> beta_used_se;
    double latent_gap = 0.0;
    std::optional<double> latent_gap_se;
    double delta_policy = 0.0;  // beta_used * latent_gap
    std::optional<double> delta_policy_se;
    bool independence_assumed = false;
    bool outcome_standardized = false;
    double outcome_mean = 0.0;
    double outcome_sd = 1.0;
    std::vector<std::string> covariates;
    std::vector<std::vector<double>> covariate_effects;  // per group
    std::size_t n_complete = 0;
    std::vector<std::string> warnings;
    bool operator==(const PolicyEffect&) const = default;
};

/// beta * gap with the delta-method SE. `cov_beta_gap` is used when known;
/// otherwise the two estimates are treated as independent.
void set_policy_difference(PolicyEffect& effect, std::optional<double> cov_beta_gap);

/// Regresses the outcome on the latent trait (plus dataset covariates).
/// two_step: OLS on EAP scores from the measurement fit. joint: the outcome
/// enters the likelihood as a conditionally normal indicator.
/// Throws ConvergenceError when a required fit does not converge.
PolicyEffect structural_effect(const OrdinalDataset& dataset, const ModelSpec& spec,
                               const StructuralOptions& options = {});

class CollinearityError : public std::invalid_argument {
public:
    CollinearityError(const std::string& message, std::vector<std::string> columns)
        : std::invalid_argument(message), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const { return columns_; }

private:
    std::vector<std::string> columns_;
};

struct OlsResult {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    double residual_variance = 0.0;
};

/// Least squares with classical SEs. Throws CollinearityError naming the
/// dependent columns.
OlsResult ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& column_names);

}  // namespace ordinv

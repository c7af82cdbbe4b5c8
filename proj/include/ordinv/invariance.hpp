#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ordinv/data_model.hpp"
#include "ordinv/estimator.hpp"

namespace ordinv {

struct LadderRow {
    std::string level;
    int df_model = 0;
    int n_free = 0;
    double loglik = 0.0;
    bool converged = false;
    /// Comparison against the previous row; absent on the first row and after
    /// any non-converged fit.
    std::optional<double> delta_chisq;
    std::optional<double> raw_delta_chisq;
    std::optional<int> delta_df;
    std::optional<double> p_value;
    std::string verdict;  // "pass", "fail", or empty
    bool operator==(const LadderRow&) const = default;
};

struct LadderResult {
    std::vector<std::string> items;
    std::vector<std::string> group_labels;
    std::string reference_group;
    double alpha = 0.05;
    std::vector<LadderRow> rows;
    std::vector<std::string> warnings;
    bool operator==(const LadderResult&) const = default;
};

struct InvarianceOptions {
    int quadrature_points = 31;
    std::string reference_group;
    double alpha = 0.05;
    bool fv_constrain_variance = false;
    FitOptions fit;
};

/// Model degrees of freedom: per-group threshold and polychoric moments minus
/// free parameters.
int model_df(const ConstraintSet& constraints, std::size_t n_free);

/// Configural, metric and scalar fits on the anchor items only. Anchors are
/// taken in dataset order, so the listed order does not matter.
LadderResult run_anchor_validation(const OrdinalDataset& dataset, const std::vector<std::string>& anchor_items,
                                   const InvarianceOptions& options = {});

/// Configural, metric, scalar and scalar_fv fits over spec.item_names (all
/// dataset items when empty), each warm-started from the previous level.
LadderResult run_invariance_ladder(const OrdinalDataset& dataset, const ModelSpec& spec,
                                   const InvarianceOptions& options = {});

/// Partial scalar spec over every dataset item, with the first group as
/// reference. A single anchor adds a warning.
ModelSpec build_partial_spec(const OrdinalDataset& dataset, const std::vector<std::string>& anchor_items,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace ordinv

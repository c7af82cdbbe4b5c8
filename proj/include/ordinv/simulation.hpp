#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ordinv/data_model.hpp"

namespace ordinv {

/// Counter-based generator: output n is a SplitMix64 finalization of
/// key + n * golden-gamma, so a stream is a pure function of its key.
class CounterRng {
public:
    using result_type = std::uint64_t;
    explicit CounterRng(std::uint64_t key) : key_(key) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

enum class ScaleItems { dif_only_4, all_8 };
std::string to_string(ScaleItems s);
ScaleItems parse_scale_items(const std::string& text);

/// How the scale-score difference is put on a standardized metric.
/// pooled_sd divides by the pooled within-group SD of the item-mean score;
/// reliability_corrected further divides by sqrt(Cronbach's alpha) so that the
/// difference is expressed in true-score SD units.
enum class ScaleMetric { pooled_sd, reliability_corrected };
std::string to_string(ScaleMetric m);
ScaleMetric parse_scale_metric(const std::string& text);

inline constexpr int kSimItems = 8;
inline constexpr int kSimDifItems = 4;

struct SimCondition {
    double delta = 0.0;
    double lambda = 0.9;
    std::vector<double> loadings;  // optional per-item override (8 entries)
    double resid_var = 1.0;
    int n_categories = 4;
    int n = 1000;
    double true_gap = 0.2;
    ScaleItems scale_items = ScaleItems::dif_only_4;
    ScaleItems full_scalar_items = ScaleItems::all_8;
    ScaleMetric scale_metric = ScaleMetric::reliability_corrected;
    int replications = 1;
    std::uint64_t base_seed = 1;
    std::optional<double> outcome_slope;  // adds Y = slope * eta + N(0, outcome_sd^2)
    double outcome_sd = 0.5;

    double loading(int item) const;
    /// Throws std::invalid_argument on an unusable condition.
    void check() const;
    /// Stable across runs and platforms. Covers the data-generating fields only,
    /// so conditions differing in estimator settings share their draws.
    std::uint64_t hash() const;
    bool operator==(const SimCondition&) const = default;
};

std::vector<std::string> sim_item_names();
std::vector<std::string> sim_dif_items();
std::vector<std::string> sim_anchor_items();
std::vector<std::string> scale_item_names(ScaleItems s);

/// Cut points: (-1, 0, 1) for four categories, otherwise K-1 equally spaced
/// points on [-1.5, 1.5] (a single cut at 0 for K = 2).
std::vector<double> category_cuts(int n_categories);

/// Category 1..K with y <= cut_k mapping to category k.
int discretize(double y, const std::vector<double>& cuts);

struct LatentDraw {
    std::vector<int> group;
    std::vector<double> eta;
    std::vector<double> continuous;  // row-major n x 8, DIF shift included
    std::vector<double> outcome;
};

LatentDraw generate_latent(const SimCondition& cond, int rep_index);
OrdinalDataset generate_replication(const SimCondition& cond, int rep_index);

/// Standardized difference (group 1 minus group 0) of per-respondent item-mean
/// scores over cond.scale_items, using cond.scale_metric.
double estimate_scale(const OrdinalDataset& dataset, const SimCondition& cond);

/// Cronbach's alpha of the named items from pooled within-group covariances
/// (complete cases only).
double cronbach_alpha(const OrdinalDataset& dataset, const std::vector<std::string>& items);

/// Focal latent mean under full scalar invariance on cond.full_scalar_items; nullopt
/// when the fit does not converge.
std::optional<double> estimate_full_scalar(const OrdinalDataset& dataset, const SimCondition& cond);

/// Focal latent mean under anchor-based partial scalar invariance on all items.
std::optional<double> estimate_partial_anchor(const OrdinalDataset& dataset,
                                              const std::vector<std::string>& anchors = sim_anchor_items());

enum class Estimator { scale, full_scalar, partial_anchor };
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& text);
inline constexpr Estimator kAllEstimators[] = {Estimator::scale, Estimator::full_scalar, Estimator::partial_anchor};

struct ReplicationRecord {
    int condition = 0;
    int replication = 0;
    Estimator estimator = Estimator::scale;
    double estimate = 0.0;  // NaN when not converged
    bool converged = false;
    bool operator==(const ReplicationRecord&) const = default;
};

struct CellSummary {
    int condition = 0;
    Estimator estimator = Estimator::scale;
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double conv_rate = 0.0;
    int replications = 0;
    int n_converged = 0;
    bool operator==(const CellSummary&) const = default;
};

struct SimulationReport {
    std::vector<SimCondition> conditions;
    std::vector<CellSummary> cells;  // condition-major, estimator order as kAllEstimators
    std::vector<ReplicationRecord> records;
    std::vector<int> flagged_conditions;  // some estimator converged in < 50% of replications
    std::string scale_metric_note;
    bool operator==(const SimulationReport&) const = default;
};

/// Runs conditions x replications x estimators. Results do not depend on `threads`.
SimulationReport run_grid(const std::vector<SimCondition>& conditions, int threads = 1);

/// Aggregates raw records (any order) into per-cell summaries.
SimulationReport summarize(const std::vector<SimCondition>& conditions, std::vector<ReplicationRecord> records);

struct GridAxes {
    std::vector<double> deltas{0.0, 0.1, 0.3, 0.5};
    std::vector<double> lambdas{0.8, 0.9, 1.0};
    std::vector<double> resid_vars{0.25, 1.0};
    std::vector<int> categories{4, 7};
    int n = 1000;
    int replications = 500;
    double true_gap = 0.2;
    ScaleItems scale_items = ScaleItems::dif_only_4;
    ScaleItems full_scalar_items = ScaleItems::all_8;
    ScaleMetric scale_metric = ScaleMetric::reliability_corrected;
    std::uint64_t base_seed = 20240601;
    /// Per-item loadings (8 entries) applied to every condition; requires a
    /// single lambda level.
    std::vector<double> loadings;
};

std::vector<SimCondition> expand_grid(const GridAxes& axes);

/// Synthetic two-group, eight-item demo data with an outcome and two covariates.
OrdinalDataset make_demo_dataset(std::uint64_t seed = 7, int n = 2000);

}  // namespace ordinv

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ordinv {

/// Category code as stored in memory: 1..K, or kMissing.
using Response = std::int16_t;
inline constexpr Response kMissing = 0;

enum class ItemRole { child_rearing, anchor };

struct ItemDescriptor {
    std::string name;
    int n_categories = 2;
    ItemRole role = ItemRole::child_rearing;
    bool operator==(const ItemDescriptor&) const = default;
};

struct Respondent {
    int group_index = 0;
    std::vector<Response> responses;
    std::optional<double> outcome;
    std::vector<double> covariates;  // NaN marks a missing covariate
};

/// Per-respondent ordinal responses with group labels. Group 0 is the default
/// reference group.
struct OrdinalDataset {
    std::vector<ItemDescriptor> items;
    std::vector<std::string> groups;
    std::vector<Respondent> rows;
    std::string outcome_name;
    std::vector<std::string> covariate_names;

    std::size_t n_items() const { return items.size(); }
    std::size_t n_groups() const { return groups.size(); }
    int item_index(const std::string& name) const;  // -1 when absent
    int group_index(const std::string& label) const;
    bool has_outcome() const;
};

struct ValidationIssue {
    int row = -1;  // -1 for dataset-level issues
    std::string item;
    std::string reason;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<ValidationIssue> issues);
    const std::vector<ValidationIssue>& issues() const { return issues_; }

private:
    std::vector<ValidationIssue> issues_;
};

/// Returns every invariant violation; an empty list means the dataset is valid.
/// Single-group fits pass min_groups = 1.
std::vector<ValidationIssue> check_dataset(const OrdinalDataset& dataset, int min_groups = 2);

/// Returns the dataset unchanged or throws ValidationError with the complete list.
const OrdinalDataset& validate_dataset(const OrdinalDataset& dataset, int min_groups = 2);

/// Copy restricted to the named items, in the given order.
OrdinalDataset select_items(const OrdinalDataset& dataset, const std::vector<std::string>& names);

enum class ConstraintLevel { configural, metric, scalar, scalar_fv, partial_scalar_anchor };

std::string to_string(ConstraintLevel level);
ConstraintLevel parse_constraint_level(const std::string& text);

struct ModelSpec {
    std::vector<std::string> item_names;
    std::vector<std::string> anchor_set;
    ConstraintLevel constraint_level = ConstraintLevel::configural;
    std::string reference_group;
    int quadrature_points = 31;
    bool include_structural = false;
    /// scalar_fv ties latent means always; latent variances only when set.
    bool fv_constrain_variance = false;
    /// Structural slope tied across groups.
    bool pooled_slope = false;
    /// Loadings held at a fixed value in every group (item name -> value).
    std::map<std::string, double> fixed_loadings;
};

/// Throws std::invalid_argument on a spec that cannot apply to the dataset.
void check_spec(const ModelSpec& spec, const OrdinalDataset& dataset);

struct StructuralParameters {
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<double> covariate_effects;
    double residual_variance = 1.0;
    bool operator==(const StructuralParameters&) const = default;
};

struct GroupParameters {
    std::vector<double> loadings;
    std::vector<std::vector<double>> thresholds;
    double latent_mean = 0.0;
    double latent_variance = 1.0;
    std::vector<double> residual_variances;
    std::optional<StructuralParameters> structural;
    bool operator==(const GroupParameters&) const = default;
};

struct ParameterSet {
    std::vector<GroupParameters> groups;
    std::vector<double> latent_intercepts;  // per item, held at 0
    int reference_group = 0;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
    bool operator==(const ParameterSet&) const = default;
};

enum class ParamKind {
    loading,
    threshold,
    latent_mean,
    latent_variance,
    residual_variance,
    latent_intercept,
    struct_intercept,
    struct_slope,
    struct_covariate,
    struct_variance
};

/// One scalar slot of a ParameterSet. `item` and `index` are -1 when unused.
struct Coordinate {
    ParamKind kind = ParamKind::loading;
    int group = 0;
    int item = -1;
    int index = -1;

    auto operator<=>(const Coordinate&) const = default;
};

std::string to_string(ParamKind kind);
ParamKind parse_param_kind(const std::string& text);
std::string to_string(const Coordinate& c);

double get_value(const ParameterSet& params, const Coordinate& c);
void set_value(ParameterSet& params, const Coordinate& c, double value);

struct Tie {
    Coordinate tied;
    Coordinate target;
    bool operator==(const Tie&) const = default;
};

struct FixedValue {
    Coordinate coord;
    double value = 0.0;
};

/// Equality ties and fixed values over a canonical coordinate list.
struct ConstraintSet {
    std::vector<Coordinate> coordinates;
    std::vector<Tie> ties;
    std::vector<FixedValue> fixed;
    int reference_group = 0;
    int n_groups = 0;
    std::vector<int> n_categories;
    int n_covariates = 0;
    bool structural = false;

    std::vector<Coordinate> free_coordinates() const;
    std::size_t n_free() const;
    bool is_fixed(const Coordinate& c) const;
    const Tie* find_tie(const Coordinate& c) const;
    const FixedValue* find_fixed(const Coordinate& c) const;
    /// Throws std::logic_error when a coordinate is tied twice or both tied and fixed.
    void check() const;
};

ConstraintSet build_constraints(const ModelSpec& spec, const OrdinalDataset& dataset);

/// True when `restricted` imposes every tie of `unrestricted` on the same layout
/// and has strictly fewer free coordinates.
bool is_nested(const ConstraintSet& restricted, const ConstraintSet& unrestricted);

/// Parameters that satisfy every tie and fixed value of `constraints`, resolved
/// against `params` for the free coordinates.
ParameterSet apply_constraints(const ConstraintSet& constraints, ParameterSet params);

/// Zero-initialized ParameterSet with the shape implied by a constraint set.
ParameterSet make_parameter_shape(const ConstraintSet& constraints);

}  // namespace ordinv

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ordinv/analysis.hpp"
#include "ordinv/data_model.hpp"
#include "ordinv/estimator.hpp"
#include "ordinv/invariance.hpp"
#include "ordinv/simulation.hpp"

namespace ordinv {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Unreadable input or unwritable output.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed CSV content or configuration.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string to_string(ItemRole role);
ItemRole parse_item_role(const std::string& text);

// ---------------------------------------------------------------------------
// CSV input

struct CsvSchema {
    std::string group_column;
    std::vector<std::string> items;
    /// Declared category counts; items not listed use their largest observed code.
    std::map<std::string, int> categories;
    std::vector<std::string> anchors;  // items tagged with the anchor role
    std::optional<std::string> outcome;
    std::vector<std::string> covariates;
    /// Expected group labels in order; empty means first-appearance order.
    std::vector<std::string> groups;
    /// Moved to the front of the group list when set.
    std::string reference_group;
};

/// Splits CSV text into records (RFC 4180 quoting, CRLF tolerated).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Categories are positive integers; an empty field or "NA" is missing.
OrdinalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
OrdinalDataset parse_dataset_csv(const std::string& text, const CsvSchema& schema);

/// Inverse of load_csv for a dataset (group labels, items, outcome, covariates).
std::string dataset_to_csv(const OrdinalDataset& dataset, const std::string& group_column = "group");

// ---------------------------------------------------------------------------
// Run configuration

struct DataConfig {
    std::filesystem::path path;
    CsvSchema schema;
};

struct ModelConfig {
    ConstraintLevel level = ConstraintLevel::partial_scalar_anchor;
    std::vector<std::string> items;  // empty: every data item
    std::vector<std::string> anchors;
    std::string reference_group;
    int quadrature_points = 31;
    bool fv_constrain_variance = false;
    bool pooled_slope = false;
};

struct StructuralConfig {
    StructuralMode mode = StructuralMode::joint;
    bool standardize_outcome = true;
    int min_rows_per_group = 30;
};

struct OutputConfig {
    std::filesystem::path dir = "out";
    bool table = true;
    bool structured = true;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    std::optional<DataConfig> data;
    ModelConfig model;
    StructuralConfig structural;
    std::optional<GridAxes> simulation;
    OutputConfig output;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    double alpha = 0.05;
};

/// Unknown keys and wrong types are errors. Relative data paths resolve
/// against `base_dir`.
RunConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
Json config_to_json(const RunConfig& config);

/// Parses "table,structured" (either order, either alone).
void parse_formats(const std::string& text, OutputConfig& output);

/// The dataset named by a config, with item roles from the model anchors.
OrdinalDataset load_config_dataset(const RunConfig& config);

/// ModelSpec implied by a config for `dataset`.
ModelSpec model_spec(const RunConfig& config, const OrdinalDataset& dataset);

// ---------------------------------------------------------------------------
// Structured results

Json to_json(const ParameterSet& params);
ParameterSet parameter_set_from_json(const Json& j);

Json to_json(const Coordinate& c);
Coordinate coordinate_from_json(const Json& j);

Json to_json(const FitResult& fit);
/// Restores the stored fields of a fit (parameters, fit statistics,
/// coordinates, standard errors, labels); constraint detail is rebuilt by refitting.
FitResult fit_from_json(const Json& j);

Json to_json(const LadderResult& ladder);
LadderResult ladder_from_json(const Json& j);

Json to_json(const ThresholdDiffTable& table);
ThresholdDiffTable threshold_table_from_json(const Json& j);

Json to_json(const LatentGap& gap, const std::vector<EapScore>& scores);
LatentGap latent_gap_from_json(const Json& j);
std::vector<EapScore> eap_scores_from_json(const Json& j);

Json to_json(const PolicyEffect& effect);
PolicyEffect policy_effect_from_json(const Json& j);

Json to_json(const SimCondition& cond);
SimCondition sim_condition_from_json(const Json& j);

Json to_json(const SimulationReport& report);
SimulationReport simulation_report_from_json(const Json& j);

Json validation_to_json(const OrdinalDataset& dataset, const std::vector<ValidationIssue>& issues);

/// Wraps a result with schema_version and kind.
Json envelope(const std::string& kind, Json result);
/// Checks schema_version and kind, returning the result payload.
const Json& open_envelope(const Json& doc, const std::string& kind);

// ---------------------------------------------------------------------------
// Flat tables

/// Shortest text that parses back to the same double; "NA" for absent or non-finite.
std::string format_number(double v);
std::string format_number(const std::optional<double>& v);

/// Columns: level,df,loglik,delta_chisq,delta_df,p
std::string ladder_table(const LadderResult& ladder);
/// Columns: delta,lambda,resid_var,k,estimator,mean,bias,sd,conv_rate
std::string simulation_table(const SimulationReport& report);
/// Columns: condition,replication,estimator,estimate,converged
std::string simulation_records_table(const SimulationReport& report);
/// Columns: item,role,threshold,tau_reference,tau_focal,delta_tau,se
std::string threshold_table(const ThresholdDiffTable& table);
/// Columns: coordinate,kind,group,item,index,estimate,se
std::string parameter_table(const FitResult& fit);
/// Columns: row,group,score,sd
std::string eap_table(const OrdinalDataset& dataset, const std::vector<EapScore>& scores);
/// Columns: reference,focal,estimate,se
std::string gap_table(const LatentGap& gap);
/// Columns: outcome,mode,pooled,beta,beta_se,latent_gap,latent_gap_se,delta_policy,delta_policy_se,independence_assumed
std::string policy_table(const PolicyEffect& effect);
/// Columns: row,item,reason
std::string validation_table(const std::vector<ValidationIssue>& issues);

// ---------------------------------------------------------------------------
// Output

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Serializes a document with a trailing newline.
std::string dump_json(const Json& doc);

/// Writes `<stem>.json` and/or `<stem>.csv` (plus any extra tables) into
/// output.dir according to output.table / output.structured. Returns the
/// paths written.
std::vector<std::filesystem::path> emit_results(const OutputConfig& output, const std::string& stem, const Json& doc,
                                                const std::string& table,
                                                const std::map<std::string, std::string>& extra_tables = {});

}  // namespace ordinv

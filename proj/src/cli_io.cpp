#include "ordinv/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ordinv {

namespace fs = std::filesystem;

std::string to_string(ItemRole role) { return role == ItemRole::anchor ? "anchor" : "child_rearing"; }

ItemRole parse_item_role(const std::string& text) {
    if (text == "anchor") return ItemRole::anchor;
    if (text == "child_rearing") return ItemRole::child_rearing;
    throw InputError("unknown item role '" + text + "'");
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t i = 0;
    if (text.rfind("\xEF\xBB\xBF", 0) == 0) i = 3;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw InputError("unterminated quoted field in CSV");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

std::optional<double> parse_real(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path.string() + "'");
    return ss.str();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

}  // namespace

OrdinalDataset parse_dataset_csv(const std::string& text, const CsvSchema& schema) {
    const auto records = parse_csv(text);
    if (records.empty()) throw InputError("CSV has no header row");
    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < records[0].size(); ++c) {
        const std::string name = trim(records[0][c]);
        if (!column.emplace(name, c).second) throw InputError("duplicate column '" + name + "'");
    }
    auto lookup = [&](const std::string& name) {
        auto it = column.find(name);
        if (it == column.end()) throw InputError("unknown column '" + name + "'");
        return it->second;
    };
    if (schema.group_column.empty()) throw InputError("no group column configured");
    if (schema.items.empty()) throw InputError("no item columns configured");
    const std::size_t group_col = lookup(schema.group_column);
    std::vector<std::size_t> item_cols;
    for (const auto& name : schema.items) item_cols.push_back(lookup(name));
    std::optional<std::size_t> outcome_col;
    if (schema.outcome) outcome_col = lookup(*schema.outcome);
    std::vector<std::size_t> cov_cols;
    for (const auto& name : schema.covariates) cov_cols.push_back(lookup(name));

    OrdinalDataset ds;
    std::vector<std::string> labels = schema.groups;
    std::set<std::string> unexpected;
    std::vector<std::string> row_labels;
    std::vector<int> max_code(schema.items.size(), 0);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && trim(rec[0]).empty()) continue;
        const std::string where = "row " + std::to_string(r);
        if (rec.size() != records[0].size()) {
            throw InputError(where + " has " + std::to_string(rec.size()) + " fields, expected " +
                             std::to_string(records[0].size()));
        }
        const std::string label = trim(rec[group_col]);
        if (is_missing(label)) throw InputError(where + ": missing group label");
        if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
            if (schema.groups.empty()) labels.push_back(label);
            else unexpected.insert(label);
        }
        Respondent resp;
        for (std::size_t j = 0; j < item_cols.size(); ++j) {
            const std::string v = trim(rec[item_cols[j]]);
            if (is_missing(v)) {
                resp.responses.push_back(kMissing);
                continue;
            }
            int code = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), code);
            if (ec != std::errc() || ptr != v.data() + v.size()) {
                throw InputError(where + ": non-integer category '" + v + "' for item '" + schema.items[j] + "'");
            }
            if (code < 1 || code > std::numeric_limits<Response>::max()) {
                throw InputError(where + ": category " + v + " for item '" + schema.items[j] +
                                 "' must be a positive integer");
            }
            max_code[j] = std::max(max_code[j], code);
            resp.responses.push_back(static_cast<Response>(code));
        }
        if (outcome_col) {
            const std::string v = trim(rec[*outcome_col]);
            if (!is_missing(v)) {
                auto x = parse_real(v);
                if (!x) throw InputError(where + ": non-numeric outcome '" + v + "'");
                resp.outcome = *x;
            }
        }
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            const std::string v = trim(rec[cov_cols[c]]);
            if (is_missing(v)) {
                resp.covariates.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            auto x = parse_real(v);
            if (!x) throw InputError(where + ": non-numeric value '" + v + "' for covariate '" + schema.covariates[c] + "'");
            resp.covariates.push_back(*x);
        }
        row_labels.push_back(label);
        ds.rows.push_back(std::move(resp));
    }
    if (!unexpected.empty()) {
        throw InputError("unexpected group label" + std::string(unexpected.size() > 1 ? "s " : " ") + "'" +
                         join({unexpected.begin(), unexpected.end()}, "', '") + "' (expected: " +
                         join(schema.groups, ", ") + ")");
    }
    if (!schema.reference_group.empty()) {
        auto it = std::find(labels.begin(), labels.end(), schema.reference_group);
        if (it == labels.end()) throw InputError("reference group '" + schema.reference_group + "' not found");
        std::rotate(labels.begin(), it, it + 1);
    }
    ds.groups = labels;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) ds.rows[i].group_index = ds.group_index(row_labels[i]);

    for (std::size_t j = 0; j < schema.items.size(); ++j) {
        const std::string& name = schema.items[j];
        if (max_code[j] == 0) throw InputError("item '" + name + "' has no observed responses");
        ItemDescriptor item;
        item.name = name;
        auto declared = schema.categories.find(name);
        item.n_categories = declared != schema.categories.end() ? declared->second : std::max(2, max_code[j]);
        item.role = std::find(schema.anchors.begin(), schema.anchors.end(), name) != schema.anchors.end()
                        ? ItemRole::anchor
                        : ItemRole::child_rearing;
        ds.items.push_back(item);
    }
    for (const auto& [name, k] : schema.categories) {
        if (std::find(schema.items.begin(), schema.items.end(), name) == schema.items.end()) {
            throw InputError("category count given for unknown item '" + name + "'");
        }
        (void)k;
    }
    if (schema.outcome) ds.outcome_name = *schema.outcome;
    ds.covariate_names = schema.covariates;
    auto issues = check_dataset(ds, 1);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return ds;
}

OrdinalDataset load_csv(const fs::path& path, const CsvSchema& schema) {
    return parse_dataset_csv(read_file(path), schema);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string dataset_to_csv(const OrdinalDataset& ds, const std::string& group_column) {
    std::vector<std::string> header{group_column};
    for (const auto& item : ds.items) header.push_back(item.name);
    if (ds.has_outcome()) header.push_back(ds.outcome_name);
    for (const auto& c : ds.covariate_names) header.push_back(c);
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + csv_field(header[i]);
    out += "\n";
    for (const auto& row : ds.rows) {
        out += csv_field(ds.groups.at(static_cast<std::size_t>(row.group_index)));
        for (Response y : row.responses) out += "," + (y == kMissing ? std::string("NA") : std::to_string(y));
        if (ds.has_outcome()) out += "," + format_number(row.outcome);
        for (double c : row.covariates) out += "," + format_number(c);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw InputError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read_opt(const Json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

void parse_formats(const std::string& text, OutputConfig& output) {
    output.table = false;
    output.structured = false;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part == "table") output.table = true;
        else if (part == "structured") output.structured = true;
        else throw InputError("unknown output format '" + part + "'");
    }
    if (!output.table && !output.structured) throw InputError("no output format selected");
}

RunConfig parse_config(const Json& doc, const fs::path& base_dir) {
    RunConfig cfg;
    try {
        check_keys(doc, {"schema_version", "seed", "threads", "alpha", "data", "model", "structural", "simulation", "output"},
                   "config");
        if (!doc.contains("schema_version")) throw InputError("config is missing schema_version");
        cfg.schema_version = doc.at("schema_version").get<int>();
        if (cfg.schema_version != kSchemaVersion) {
            throw InputError("unsupported schema_version " + std::to_string(cfg.schema_version));
        }
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
        read_opt(doc, "threads", cfg.threads);
        read_opt(doc, "alpha", cfg.alpha);
        if (doc.contains("data")) {
            const Json& d = doc.at("data");
            check_keys(d, {"path", "group_column", "items", "categories", "outcome", "covariates", "groups"}, "data");
            DataConfig dc;
            if (!d.contains("path")) throw InputError("data.path is required");
            dc.path = d.at("path").get<std::string>();
            if (dc.path.is_relative() && !base_dir.empty()) dc.path = base_dir / dc.path;
            dc.schema.group_column = d.value("group_column", std::string("group"));
            read_opt(d, "items", dc.schema.items);
            read_opt(d, "categories", dc.schema.categories);
            if (d.contains("outcome") && !d.at("outcome").is_null()) dc.schema.outcome = d.at("outcome").get<std::string>();
            read_opt(d, "covariates", dc.schema.covariates);
            read_opt(d, "groups", dc.schema.groups);
            cfg.data = dc;
        }
        if (doc.contains("model")) {
            const Json& m = doc.at("model");
            check_keys(m, {"level", "items", "anchors", "reference_group", "quadrature_points", "fv_constrain_variance",
                           "pooled_slope"},
                       "model");
            if (m.contains("level")) cfg.model.level = parse_constraint_level(m.at("level").get<std::string>());
            read_opt(m, "items", cfg.model.items);
            read_opt(m, "anchors", cfg.model.anchors);
            read_opt(m, "reference_group", cfg.model.reference_group);
            read_opt(m, "quadrature_points", cfg.model.quadrature_points);
            read_opt(m, "fv_constrain_variance", cfg.model.fv_constrain_variance);
            read_opt(m, "pooled_slope", cfg.model.pooled_slope);
        }
        if (doc.contains("structural")) {
            const Json& s = doc.at("structural");
            check_keys(s, {"mode", "standardize_outcome", "min_rows_per_group"}, "structural");
            if (s.contains("mode")) cfg.structural.mode = parse_structural_mode(s.at("mode").get<std::string>());
            read_opt(s, "standardize_outcome", cfg.structural.standardize_outcome);
            read_opt(s, "min_rows_per_group", cfg.structural.min_rows_per_group);
        }
        if (doc.contains("simulation")) {
            const Json& s = doc.at("simulation");
            check_keys(s, {"deltas", "lambdas", "resid_vars", "categories", "n", "replications", "true_gap", "scale_items",
                           "full_scalar_items", "scale_metric", "base_seed", "loadings"},
                       "simulation");
            GridAxes a;
            read_opt(s, "deltas", a.deltas);
            read_opt(s, "lambdas", a.lambdas);
            read_opt(s, "resid_vars", a.resid_vars);
            read_opt(s, "categories", a.categories);
            read_opt(s, "n", a.n);
            read_opt(s, "replications", a.replications);
            read_opt(s, "true_gap", a.true_gap);
            if (s.contains("scale_items")) a.scale_items = parse_scale_items(s.at("scale_items").get<std::string>());
            if (s.contains("full_scalar_items")) {
                a.full_scalar_items = parse_scale_items(s.at("full_scalar_items").get<std::string>());
            }
            if (s.contains("scale_metric")) a.scale_metric = parse_scale_metric(s.at("scale_metric").get<std::string>());
            if (s.contains("base_seed")) {
                a.base_seed = s.at("base_seed").get<std::uint64_t>();
                if (!cfg.seed) cfg.seed = a.base_seed;
            }
            read_opt(s, "loadings", a.loadings);
            cfg.simulation = a;
        }
        if (doc.contains("output")) {
            const Json& o = doc.at("output");
            check_keys(o, {"dir", "formats"}, "output");
            if (o.contains("dir")) cfg.output.dir = o.at("dir").get<std::string>();
            if (o.contains("formats")) {
                std::string joined;
                for (const auto& f : o.at("formats")) joined += (joined.empty() ? "" : ",") + f.get<std::string>();
                parse_formats(joined, cfg.output);
            }
        }
    } catch (const Json::exception& e) {
        throw InputError(std::string("malformed config: ") + e.what());
    } catch (const InputError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    if (cfg.threads < 1) throw InputError("threads must be >= 1");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    const std::string text = read_file(path);
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

Json config_to_json(const RunConfig& cfg) {
    Json j;
    j["schema_version"] = cfg.schema_version;
    if (cfg.seed) j["seed"] = *cfg.seed;
    j["threads"] = cfg.threads;
    j["alpha"] = cfg.alpha;
    if (cfg.data) {
        Json d;
        d["path"] = cfg.data->path.generic_string();
        d["group_column"] = cfg.data->schema.group_column;
        d["items"] = cfg.data->schema.items;
        if (!cfg.data->schema.categories.empty()) d["categories"] = cfg.data->schema.categories;
        if (cfg.data->schema.outcome) d["outcome"] = *cfg.data->schema.outcome;
        if (!cfg.data->schema.covariates.empty()) d["covariates"] = cfg.data->schema.covariates;
        if (!cfg.data->schema.groups.empty()) d["groups"] = cfg.data->schema.groups;
        j["data"] = d;
    }
    Json m;
    m["level"] = to_string(cfg.model.level);
    if (!cfg.model.items.empty()) m["items"] = cfg.model.items;
    m["anchors"] = cfg.model.anchors;
    if (!cfg.model.reference_group.empty()) m["reference_group"] = cfg.model.reference_group;
    m["quadrature_points"] = cfg.model.quadrature_points;
    m["fv_constrain_variance"] = cfg.model.fv_constrain_variance;
    m["pooled_slope"] = cfg.model.pooled_slope;
    j["model"] = m;
    j["structural"] = {{"mode", to_string(cfg.structural.mode)},
                       {"standardize_outcome", cfg.structural.standardize_outcome},
                       {"min_rows_per_group", cfg.structural.min_rows_per_group}};
    if (cfg.simulation) {
        const GridAxes& a = *cfg.simulation;
        Json s{{"deltas", a.deltas},
               {"lambdas", a.lambdas},
               {"resid_vars", a.resid_vars},
               {"categories", a.categories},
               {"n", a.n},
               {"replications", a.replications},
               {"true_gap", a.true_gap},
               {"scale_items", to_string(a.scale_items)},
               {"full_scalar_items", to_string(a.full_scalar_items)},
               {"scale_metric", to_string(a.scale_metric)},
               {"base_seed", a.base_seed}};
        if (!a.loadings.empty()) s["loadings"] = a.loadings;
        j["simulation"] = s;
    }
    Json formats = Json::array();
    if (cfg.output.table) formats.push_back("table");
    if (cfg.output.structured) formats.push_back("structured");
    j["output"] = {{"dir", cfg.output.dir.generic_string()}, {"formats", formats}};
    return j;
}

OrdinalDataset load_config_dataset(const RunConfig& cfg) {
    if (!cfg.data) throw InputError("config has no data section");
    CsvSchema schema = cfg.data->schema;
    schema.anchors = cfg.model.anchors;
    schema.reference_group = cfg.model.reference_group;
    return load_csv(cfg.data->path, schema);
}

ModelSpec model_spec(const RunConfig& cfg, const OrdinalDataset& dataset) {
    ModelSpec spec;
    spec.item_names = cfg.model.items;
    if (spec.item_names.empty()) {
        for (const auto& item : dataset.items) spec.item_names.push_back(item.name);
    }
    spec.anchor_set = cfg.model.anchors;
    spec.constraint_level = cfg.model.level;
    spec.reference_group = cfg.model.reference_group.empty() ? dataset.groups.front() : cfg.model.reference_group;
    spec.quadrature_points = cfg.model.quadrature_points;
    spec.fv_constrain_variance = cfg.model.fv_constrain_variance;
    spec.pooled_slope = cfg.model.pooled_slope;
    return spec;
}

// ---------------------------------------------------------------------------
// Structured results

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
Json num(const std::optional<double>& v) { return v && std::isfinite(*v) ? Json(*v) : Json(nullptr); }

double get_num(const Json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }
std::optional<double> get_opt(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

Json to_json(const ItemDescriptor& item) {
    return {{"name", item.name}, {"n_categories", item.n_categories}, {"role", to_string(item.role)}};
}

ItemDescriptor item_from_json(const Json& j) {
    return {j.at("name").get<std::string>(), j.at("n_categories").get<int>(),
            parse_item_role(j.at("role").get<std::string>())};
}

Json opt_vector(const std::vector<std::optional<double>>& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(num(x));
    return a;
}

std::vector<std::optional<double>> opt_vector_from_json(const Json& j) {
    std::vector<std::optional<double>> v;
    for (const auto& x : j) v.push_back(get_opt(x));
    return v;
}

}  // namespace

Json to_json(const Coordinate& c) {
    return {{"kind", to_string(c.kind)}, {"group", c.group}, {"item", c.item}, {"index", c.index}};
}

Coordinate coordinate_from_json(const Json& j) {
    return {parse_param_kind(j.at("kind").get<std::string>()), j.at("group").get<int>(), j.at("item").get<int>(),
            j.at("index").get<int>()};
}

Json to_json(const ParameterSet& p) {
    Json groups = Json::array();
    for (const auto& gp : p.groups) {
        Json g{{"loadings", gp.loadings},
               {"thresholds", gp.thresholds},
               {"latent_mean", gp.latent_mean},
               {"latent_variance", gp.latent_variance},
               {"residual_variances", gp.residual_variances}};
        if (gp.structural) {
            g["structural"] = {{"intercept", gp.structural->intercept},
                               {"slope", gp.structural->slope},
                               {"covariate_effects", gp.structural->covariate_effects},
                               {"residual_variance", gp.structural->residual_variance}};
        }
        groups.push_back(g);
    }
    return {{"reference_group", p.reference_group}, {"latent_intercepts", p.latent_intercepts}, {"groups", groups}};
}

ParameterSet parameter_set_from_json(const Json& j) {
    ParameterSet p;
    p.reference_group = j.at("reference_group").get<int>();
    p.latent_intercepts = j.at("latent_intercepts").get<std::vector<double>>();
    for (const auto& g : j.at("groups")) {
        GroupParameters gp;
        gp.loadings = g.at("loadings").get<std::vector<double>>();
        gp.thresholds = g.at("thresholds").get<std::vector<std::vector<double>>>();
        gp.latent_mean = g.at("latent_mean").get<double>();
        gp.latent_variance = g.at("latent_variance").get<double>();
        gp.residual_variances = g.at("residual_variances").get<std::vector<double>>();
        if (g.contains("structural")) {
            const Json& s = g.at("structural");
            StructuralParameters sp;
            sp.intercept = s.at("intercept").get<double>();
            sp.slope = s.at("slope").get<double>();
            sp.covariate_effects = s.at("covariate_effects").get<std::vector<double>>();
            sp.residual_variance = s.at("residual_variance").get<double>();
            gp.structural = sp;
        }
        p.groups.push_back(std::move(gp));
    }
    return p;
}

Json to_json(const FitResult& fit) {
    Json items = Json::array();
    for (const auto& item : fit.items) items.push_back(to_json(item));
    Json free = Json::array();
    for (std::size_t i = 0; i < fit.free_coordinates.size(); ++i) {
        const Coordinate& c = fit.free_coordinates[i];
        free.push_back({{"coordinate", to_json(c)},
                        {"label", to_string(c)},
                        {"estimate", get_value(fit.params, c)},
                        {"se", i < fit.standard_errors.size() ? num(fit.standard_errors[i]) : Json(nullptr)}});
    }
    const ModelSpec& s = fit.spec_echo;
    Json spec{{"items", s.item_names},
              {"anchors", s.anchor_set},
              {"constraint_level", to_string(s.constraint_level)},
              {"reference_group", s.reference_group},
              {"quadrature_points", s.quadrature_points},
              {"include_structural", s.include_structural},
              {"fv_constrain_variance", s.fv_constrain_variance},
              {"pooled_slope", s.pooled_slope}};
    Json j{{"converged", fit.converged},
           {"loglik", num(fit.loglik)},
           {"n_free", fit.n_free},
           {"iterations", fit.iterations},
           {"gradient_norm", num(fit.gradient_norm)},
           {"gradient_tolerance", num(fit.gradient_tolerance)},
           {"message", fit.message},
           {"group_labels", fit.group_labels},
           {"items", items},
           {"spec", spec},
           {"parameters", to_json(fit.params)},
           {"free_parameters", free}};
    if (!fit.constraints.coordinates.empty()) j["df_model"] = model_df(fit.constraints, fit.n_free);
    return j;
}

FitResult fit_from_json(const Json& j) {
    FitResult f;
    f.converged = j.at("converged").get<bool>();
    f.loglik = get_num(j.at("loglik"));
    f.n_free = j.at("n_free").get<std::size_t>();
    f.iterations = j.at("iterations").get<int>();
    f.gradient_norm = get_num(j.at("gradient_norm"));
    f.gradient_tolerance = get_num(j.at("gradient_tolerance"));
    f.message = j.at("message").get<std::string>();
    f.group_labels = j.at("group_labels").get<std::vector<std::string>>();
    for (const auto& item : j.at("items")) f.items.push_back(item_from_json(item));
    const Json& s = j.at("spec");
    f.spec_echo.item_names = s.at("items").get<std::vector<std::string>>();
    f.spec_echo.anchor_set = s.at("anchors").get<std::vector<std::string>>();
    f.spec_echo.constraint_level = parse_constraint_level(s.at("constraint_level").get<std::string>());
    f.spec_echo.reference_group = s.at("reference_group").get<std::string>();
    f.spec_echo.quadrature_points = s.at("quadrature_points").get<int>();
    f.spec_echo.include_structural = s.at("include_structural").get<bool>();
    f.spec_echo.fv_constrain_variance = s.at("fv_constrain_variance").get<bool>();
    f.spec_echo.pooled_slope = s.at("pooled_slope").get<bool>();
    f.params = parameter_set_from_json(j.at("parameters"));
    for (const auto& fp : j.at("free_parameters")) {
        f.free_coordinates.push_back(coordinate_from_json(fp.at("coordinate")));
        f.standard_errors.push_back(get_opt(fp.at("se")));
    }
    return f;
}

Json to_json(const LadderResult& ladder) {
    Json rows = Json::array();
    for (const auto& r : ladder.rows) {
        rows.push_back({{"level", r.level},
                        {"df", r.df_model},
                        {"n_free", r.n_free},
                        {"loglik", num(r.loglik)},
                        {"converged", r.converged},
                        {"delta_chisq", num(r.delta_chisq)},
                        {"raw_delta_chisq", num(r.raw_delta_chisq)},
                        {"delta_df", r.delta_df ? Json(*r.delta_df) : Json(nullptr)},
                        {"p", num(r.p_value)},
                        {"verdict", r.verdict}});
    }
    return {{"items", ladder.items},
            {"group_labels", ladder.group_labels},
            {"reference_group", ladder.reference_group},
            {"alpha", ladder.alpha},
            {"rows", rows},
            {"warnings", ladder.warnings}};
}

LadderResult ladder_from_json(const Json& j) {
    LadderResult out;
    out.items = j.at("items").get<std::vector<std::string>>();
    out.group_labels = j.at("group_labels").get<std::vector<std::string>>();
    out.reference_group = j.at("reference_group").get<std::string>();
    out.alpha = j.at("alpha").get<double>();
    out.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
        LadderRow row;
        row.level = r.at("level").get<std::string>();
        row.df_model = r.at("df").get<int>();
        row.n_free = r.at("n_free").get<int>();
        row.loglik = get_num(r.at("loglik"));
        row.converged = r.at("converged").get<bool>();
        row.delta_chisq = get_opt(r.at("delta_chisq"));
        row.raw_delta_chisq = get_opt(r.at("raw_delta_chisq"));
        if (!r.at("delta_df").is_null()) row.delta_df = r.at("delta_df").get<int>();
        row.p_value = get_opt(r.at("p"));
        row.verdict = r.at("verdict").get<std::string>();
        out.rows.push_back(std::move(row));
    }
    return out;
}

Json to_json(const ThresholdDiffTable& table) {
    Json rows = Json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"item", r.item},
                        {"role", to_string(r.role)},
                        {"threshold", r.threshold},
                        {"tau_reference", r.tau_reference},
                        {"tau_focal", r.tau_focal},
                        {"delta_tau", r.delta},
                        {"se", num(r.se)}});
    }
    return {{"reference_group", table.reference_group}, {"focal_group", table.focal_group}, {"rows", rows}};
}

ThresholdDiffTable threshold_table_from_json(const Json& j) {
    ThresholdDiffTable t;
    t.reference_group = j.at("reference_group").get<std::string>();
    t.focal_group = j.at("focal_group").get<std::string>();
    for (const auto& r : j.at("rows")) {
        ThresholdDiffRow row;
        row.item = r.at("item").get<std::string>();
        row.role = parse_item_role(r.at("role").get<std::string>());
        row.threshold = r.at("threshold").get<int>();
        row.tau_reference = r.at("tau_reference").get<double>();
        row.tau_focal = r.at("tau_focal").get<double>();
        row.delta = r.at("delta_tau").get<double>();
        row.se = get_opt(r.at("se"));
        t.rows.push_back(row);
    }
    return t;
}

Json to_json(const LatentGap& gap, const std::vector<EapScore>& scores) {
    Json eap = Json::array();
    for (const auto& s : scores) eap.push_back({s.score, s.sd});
    return {{"gap",
             {{"reference_group", gap.reference_group},
              {"focal_group", gap.focal_group},
              {"estimate", gap.estimate},
              {"se", num(gap.se)}}},
            {"eap_scores", eap}};
}

LatentGap latent_gap_from_json(const Json& j) {
    const Json& g = j.at("gap");
    return {g.at("reference_group").get<std::string>(), g.at("focal_group").get<std::string>(),
            g.at("estimate").get<double>(), get_opt(g.at("se"))};
}

std::vector<EapScore> eap_scores_from_json(const Json& j) {
    std::vector<EapScore> out;
    for (const auto& s : j.at("eap_scores")) out.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    return out;
}

Json to_json(const PolicyEffect& e) {
    return {{"outcome", e.outcome},
            {"mode", to_string(e.mode)},
            {"group_labels", e.group_labels},
            {"reference_group", e.reference_group},
            {"focal_group", e.focal_group},
            {"pooled", e.pooled},
            {"beta", e.beta},
            {"beta_se", opt_vector(e.beta_se)},
            {"beta_used", e.beta_used},
            {"beta_used_se", num(e.beta_used_se)},
            {"latent_gap", e.latent_gap},
            {"latent_gap_se", num(e.latent_gap_se)},
            {"delta_policy", e.delta_policy},
            {"delta_policy_se", num(e.delta_policy_se)},
            {"independence_assumed", e.independence_assumed},
            {"outcome_standardized", e.outcome_standardized},
            {"outcome_mean", e.outcome_mean},
            {"outcome_sd", e.outcome_sd},
            {"covariates", e.covariates},
            {"covariate_effects", e.covariate_effects},
            {"n_complete", e.n_complete},
            {"warnings", e.warnings}};
}

PolicyEffect policy_effect_from_json(const Json& j) {
    PolicyEffect e;
    e.outcome = j.at("outcome").get<std::string>();
    e.mode = parse_structural_mode(j.at("mode").get<std::string>());
    e.group_labels = j.at("group_labels").get<std::vector<std::string>>();
    e.reference_group = j.at("reference_group").get<std::string>();
    e.focal_group = j.at("focal_group").get<std::string>();
    e.pooled = j.at("pooled").get<bool>();
    e.beta = j.at("beta").get<std::vector<double>>();
    e.beta_se = opt_vector_from_json(j.at("beta_se"));
    e.beta_used = j.at("beta_used").get<double>();
    e.beta_used_se = get_opt(j.at("beta_used_se"));
    e.latent_gap = j.at("latent_gap").get<double>();
    e.latent_gap_se = get_opt(j.at("latent_gap_se"));
    e.delta_policy = j.at("delta_policy").get<double>();
    e.delta_policy_se = get_opt(j.at("delta_policy_se"));
    e.independence_assumed = j.at("independence_assumed").get<bool>();
    e.outcome_standardized = j.at("outcome_standardized").get<bool>();
    e.outcome_mean = j.at("outcome_mean").get<double>();
    e.outcome_sd = j.at("outcome_sd").get<double>();
    e.covariates = j.at("covariates").get<std::vector<std::string>>();
    e.covariate_effects = j.at("covariate_effects").get<std::vector<std::vector<double>>>();
    e.n_complete = j.at("n_complete").get<std::size_t>();
    e.warnings = j.at("warnings").get<std::vector<std::string>>();
    return e;
}

Json to_json(const SimCondition& c) {
    Json j{{"delta", c.delta},
           {"lambda", c.lambda},
           {"loadings", c.loadings},
           {"resid_var", c.resid_var},
           {"n_categories", c.n_categories},
           {"n", c.n},
           {"true_gap", c.true_gap},
           {"scale_items", to_string(c.scale_items)},
           {"full_scalar_items", to_string(c.full_scalar_items)},
           {"scale_metric", to_string(c.scale_metric)},
           {"replications", c.replications},
           {"base_seed", c.base_seed},
           {"outcome_slope", num(c.outcome_slope)},
           {"outcome_sd", c.outcome_sd}};
    return j;
}

SimCondition sim_condition_from_json(const Json& j) {
    SimCondition c;
    c.delta = j.at("delta").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.loadings = j.at("loadings").get<std::vector<double>>();
    c.resid_var = j.at("resid_var").get<double>();
    c.n_categories = j.at("n_categories").get<int>();
    c.n = j.at("n").get<int>();
    c.true_gap = j.at("true_gap").get<double>();
    c.scale_items = parse_scale_items(j.at("scale_items").get<std::string>());
    c.full_scalar_items = parse_scale_items(j.at("full_scalar_items").get<std::string>());
    c.scale_metric = parse_scale_metric(j.at("scale_metric").get<std::string>());
    c.replications = j.at("replications").get<int>();
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    c.outcome_slope = get_opt(j.at("outcome_slope"));
    c.outcome_sd = j.at("outcome_sd").get<double>();
    return c;
}

Json to_json(const SimulationReport& r) {
    Json conditions = Json::array();
    for (const auto& c : r.conditions) conditions.push_back(to_json(c));
    Json cells = Json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"condition", c.condition},
                         {"estimator", to_string(c.estimator)},
                         {"mean", num(c.mean)},
                         {"bias", num(c.bias)},
                         {"sd", num(c.sd)},
                         {"conv_rate", c.conv_rate},
                         {"replications", c.replications},
                         {"n_converged", c.n_converged}});
    }
    // Raw records as compact rows: [condition, replication, estimator, estimate, converged].
    Json records = Json::array();
    for (const auto& rec : r.records) {
        records.push_back({rec.condition, rec.replication, to_string(rec.estimator), num(rec.estimate), rec.converged});
    }
    return {{"scale_metric_note", r.scale_metric_note},
            {"flagged_conditions", r.flagged_conditions},
            {"conditions", conditions},
            {"cells", cells},
            {"records", records}};
}

SimulationReport simulation_report_from_json(const Json& j) {
    SimulationReport r;
    r.scale_metric_note = j.at("scale_metric_note").get<std::string>();
    r.flagged_conditions = j.at("flagged_conditions").get<std::vector<int>>();
    for (const auto& c : j.at("conditions")) r.conditions.push_back(sim_condition_from_json(c));
    for (const auto& c : j.at("cells")) {
        CellSummary cell;
        cell.condition = c.at("condition").get<int>();
        cell.estimator = parse_estimator(c.at("estimator").get<std::string>());
        cell.mean = get_num(c.at("mean"));
        cell.bias = get_num(c.at("bias"));
        cell.sd = get_num(c.at("sd"));
        cell.conv_rate = c.at("conv_rate").get<double>();
        cell.replications = c.at("replications").get<int>();
        cell.n_converged = c.at("n_converged").get<int>();
        r.cells.push_back(cell);
    }
    for (const auto& rec : j.at("records")) {
        ReplicationRecord x;
        x.condition = rec.at(0).get<int>();
        x.replication = rec.at(1).get<int>();
        x.estimator = parse_estimator(rec.at(2).get<std::string>());
        x.estimate = get_num(rec.at(3));
        x.converged = rec.at(4).get<bool>();
        r.records.push_back(x);
    }
    return r;
}

Json validation_to_json(const OrdinalDataset& ds, const std::vector<ValidationIssue>& issues) {
    Json groups = Json::array();
    for (std::size_t g = 0; g < ds.groups.size(); ++g) {
        std::size_t n = 0;
        for (const auto& row : ds.rows) n += static_cast<std::size_t>(row.group_index) == g;
        groups.push_back({{"label", ds.groups[g]}, {"n", n}});
    }
    Json items = Json::array();
    for (const auto& item : ds.items) items.push_back(to_json(item));
    Json list = Json::array();
    for (const auto& i : issues) list.push_back({{"row", i.row}, {"item", i.item}, {"reason", i.reason}});
    return {{"valid", issues.empty()},
            {"n_rows", ds.rows.size()},
            {"groups", groups},
            {"items", items},
            {"outcome", ds.outcome_name},
            {"covariates", ds.covariate_names},
            {"issues", list}};
}

Json envelope(const std::string& kind, Json result) {
    return {{"schema_version", kSchemaVersion}, {"kind", kind}, {"result", std::move(result)}};
}

const Json& open_envelope(const Json& doc, const std::string& kind) {
    if (!doc.contains("schema_version") || doc.at("schema_version") != kSchemaVersion) {
        throw InputError("unsupported result schema_version");
    }
    if (doc.at("kind") != kind) throw InputError("expected a '" + kind + "' result");
    return doc.at("result");
}

// ---------------------------------------------------------------------------
// Tables

std::string format_number(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return "NA";
    return std::string(buf, ptr);
}

std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

namespace {

class Table {
public:
    explicit Table(std::initializer_list<const char*> columns) {
        for (const char* c : columns) add(c);
        end_row();
    }
    Table& add(const std::string& s) {
        text_ += (first_ ? "" : ",") + csv_field(s);
        first_ = false;
        return *this;
    }
    Table& add(double v) { return add(format_number(v)); }
    Table& add(const std::optional<double>& v) { return add(format_number(v)); }
    Table& add(int v) { return add(std::to_string(v)); }
    void end_row() {
        text_ += "\n";
        first_ = true;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
    bool first_ = true;
};

}  // namespace

std::string ladder_table(const LadderResult& ladder) {
    Table t{"level", "df", "loglik", "delta_chisq", "delta_df", "p"};
    for (const auto& r : ladder.rows) {
        t.add(r.level).add(r.df_model).add(r.loglik);
        t.add(r.delta_chisq).add(r.delta_df ? std::to_string(*r.delta_df) : "NA").add(r.p_value);
        t.end_row();
    }
    return t.str();
}

std::string simulation_table(const SimulationReport& report) {
    Table t{"delta", "lambda", "resid_var", "k", "estimator", "mean", "bias", "sd", "conv_rate"};
    for (const auto& c : report.cells) {
        const SimCondition& cond = report.conditions.at(static_cast<std::size_t>(c.condition));
        t.add(cond.delta).add(cond.lambda).add(cond.resid_var).add(cond.n_categories).add(to_string(c.estimator));
        t.add(c.mean).add(c.bias).add(c.sd).add(c.conv_rate);
        t.end_row();
    }
    return t.str();
}

std::string simulation_records_table(const SimulationReport& report) {
    Table t{"condition", "replication", "estimator", "estimate", "converged"};
    for (const auto& r : report.records) {
        t.add(r.condition).add(r.replication).add(to_string(r.estimator)).add(r.estimate).add(r.converged ? 1 : 0);
        t.end_row();
    }
    return t.str();
}

std::string threshold_table(const ThresholdDiffTable& table) {
    Table t{"item", "role", "threshold", "tau_reference", "tau_focal", "delta_tau", "se"};
    for (const auto& r : table.rows) {
        t.add(r.item).add(to_string(r.role)).add(r.threshold).add(r.tau_reference).add(r.tau_focal).add(r.delta).add(r.se);
        t.end_row();
    }
    return t.str();
}

std::string parameter_table(const FitResult& fit) {
    Table t{"coordinate", "kind", "group", "item", "index", "estimate", "se"};
    for (std::size_t i = 0; i < fit.free_coordinates.size(); ++i) {
        const Coordinate& c = fit.free_coordinates[i];
        t.add(to_string(c)).add(to_string(c.kind)).add(fit.group_labels.at(static_cast<std::size_t>(c.group)));
        t.add(c.item >= 0 && static_cast<std::size_t>(c.item) < fit.items.size() ? fit.items[static_cast<std::size_t>(c.item)].name
                                                                                  : std::string());
        t.add(c.index >= 0 ? std::to_string(c.index + 1) : std::string());
        t.add(get_value(fit.params, c)).add(i < fit.standard_errors.size() ? fit.standard_errors[i] : std::nullopt);
        t.end_row();
    }
    return t.str();
}

std::string eap_table(const OrdinalDataset& dataset, const std::vector<EapScore>& scores) {
    Table t{"row", "group", "score", "sd"};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        t.add(static_cast<int>(i) + 1).add(dataset.groups.at(static_cast<std::size_t>(dataset.rows.at(i).group_index)));
        t.add(scores[i].score).add(scores[i].sd);
        t.end_row();
    }
    return t.str();
}

std::string gap_table(const LatentGap& gap) {
    Table t{"reference", "focal", "estimate", "se"};
    t.add(gap.reference_group).add(gap.focal_group).add(gap.estimate).add(gap.se);
    t.end_row();
    return t.str();
}

std::string policy_table(const PolicyEffect& e) {
    Table t{"outcome", "mode", "pooled", "beta", "beta_se", "latent_gap", "latent_gap_se", "delta_policy",
            "delta_policy_se", "independence_assumed"};
    t.add(e.outcome).add(to_string(e.mode)).add(e.pooled ? 1 : 0).add(e.beta_used).add(e.beta_used_se);
    t.add(e.latent_gap).add(e.latent_gap_se).add(e.delta_policy).add(e.delta_policy_se).add(e.independence_assumed ? 1 : 0);
    t.end_row();
    return t.str();
}

std::string validation_table(const std::vector<ValidationIssue>& issues) {
    Table t{"row", "item", "reason"};
    for (const auto& i : issues) {
        t.add(i.row >= 0 ? std::to_string(i.row + 1) : std::string()).add(i.item).add(i.reason);
        t.end_row();
    }
    return t.str();
}

// ---------------------------------------------------------------------------
// Output

void write_atomic(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw IoError("error writing '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignore;
        fs::remove(tmp, ignore);
        throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
    }
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

std::vector<fs::path> emit_results(const OutputConfig& output, const std::string& stem, const Json& doc,
                                   const std::string& table, const std::map<std::string, std::string>& extra_tables) {
    std::vector<fs::path> written;
    if (output.structured) {
        const fs::path p = output.dir / (stem + ".json");
        write_atomic(p, dump_json(doc));
        written.push_back(p);
    }
    if (output.table) {
        const fs::path p = output.dir / (stem + ".csv");
        write_atomic(p, table);
        written.push_back(p);
        for (const auto& [name, content] : extra_tables) {
            const fs::path q = output.dir / name;
            write_atomic(q, content);
            written.push_back(q);
        }
    }
    return written;
}

}  // namespace ordinv

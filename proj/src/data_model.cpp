#include "ordinv/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ordinv {

int OrdinalDataset::item_index(const std::string& name) const {
    for (std::size_t j = 0; j < items.size(); ++j) {
        if (items[j].name == name) return static_cast<int>(j);
    }
    return -1;
}

int OrdinalDataset::group_index(const std::string& label) const {
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g] == label) return static_cast<int>(g);
    }
    return -1;
}

bool OrdinalDataset::has_outcome() const {
    return std::any_of(rows.begin(), rows.end(), [](const Respondent& r) { return r.outcome.has_value(); });
}

namespace {

std::string summarize(const std::vector<ValidationIssue>& issues) {
    std::ostringstream os;
    os << issues.size() << " validation issue(s)";
    const std::size_t shown = std::min<std::size_t>(issues.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) {
        os << (i == 0 ? ": " : "; ");
        if (issues[i].row >= 0) os << "row " << issues[i].row << " ";
        if (!issues[i].item.empty()) os << "item '" << issues[i].item << "' ";
        os << issues[i].reason;
    }
    if (shown < issues.size()) os << "; ...";
    return os.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

std::vector<ValidationIssue> check_dataset(const OrdinalDataset& dataset, int min_groups) {
    std::vector<ValidationIssue> issues;
    if (dataset.items.empty()) issues.push_back({-1, "", "dataset has no items"});
    for (const auto& item : dataset.items) {
        if (item.n_categories < 2) {
            issues.push_back({-1, item.name, "item needs at least 2 categories"});
        }
    }
    if (dataset.groups.size() < static_cast<std::size_t>(min_groups)) {
        issues.push_back({-1, "", "dataset needs at least " + std::to_string(min_groups) + " groups"});
    }

    std::vector<int> usable(dataset.groups.size(), 0);
    const std::size_t n_cov = dataset.covariate_names.size();
    for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
        const auto& row = dataset.rows[i];
        const int r = static_cast<int>(i);
        if (row.group_index < 0 || row.group_index >= static_cast<int>(dataset.groups.size())) {
            issues.push_back({r, "", "group index out of range"});
            continue;
        }
        if (row.responses.size() != dataset.items.size()) {
            issues.push_back({r, "", "response count does not match item count"});
            continue;
        }
        bool any = false;
        for (std::size_t j = 0; j < row.responses.size(); ++j) {
            const Response y = row.responses[j];
            if (y == kMissing) continue;
            const int k = dataset.items[j].n_categories;
            if (y < 1 || y > k) {
                issues.push_back({r, dataset.items[j].name,
                                  "category " + std::to_string(y) + " outside 1.." + std::to_string(k)});
            } else {
                any = true;
            }
        }
        if (any) ++usable[static_cast<std::size_t>(row.group_index)];
        if (row.covariates.size() != n_cov) {
            issues.push_back({r, "", "ragged covariates: expected " + std::to_string(n_cov) + ", found " +
                                         std::to_string(row.covariates.size())});
        }
    }
    for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
        if (usable[g] == 0) issues.push_back({-1, "", "empty group '" + dataset.groups[g] + "'"});
    }
    return issues;
}

const OrdinalDataset& validate_dataset(const OrdinalDataset& dataset, int min_groups) {
    auto issues = check_dataset(dataset, min_groups);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return dataset;
}

OrdinalDataset select_items(const OrdinalDataset& dataset, const std::vector<std::string>& names) {
    std::vector<int> idx;
    idx.reserve(names.size());
    for (const auto& name : names) {
        const int j = dataset.item_index(name);
        if (j < 0) throw std::invalid_argument("unknown item '" + name + "'");
        idx.push_back(j);
    }
    OrdinalDataset out;
    out.groups = dataset.groups;
    out.outcome_name = dataset.outcome_name;
    out.covariate_names = dataset.covariate_names;
    for (int j : idx) out.items.push_back(dataset.items[static_cast<std::size_t>(j)]);
    out.rows.reserve(dataset.rows.size());
    for (const auto& row : dataset.rows) {
        Respondent r;
        r.group_index = row.group_index;
        r.outcome = row.outcome;
        r.covariates = row.covariates;
        r.responses.reserve(idx.size());
        for (int j : idx) r.responses.push_back(row.responses[static_cast<std::size_t>(j)]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

std::string to_string(ConstraintLevel level) {
    switch (level) {
        case ConstraintLevel::configural: return "configural";
        case ConstraintLevel::metric: return "metric";
        case ConstraintLevel::scalar: return "scalar";
        case ConstraintLevel::scalar_fv: return "scalar_fv";
        case ConstraintLevel::partial_scalar_anchor: return "partial_scalar_anchor";
    }
    return "unknown";
}

ConstraintLevel parse_constraint_level(const std::string& text) {
    for (auto level : {ConstraintLevel::configural, ConstraintLevel::metric, ConstraintLevel::scalar,
                       ConstraintLevel::scalar_fv, ConstraintLevel::partial_scalar_anchor}) {
        if (to_string(level) == text) return level;
    }
    throw std::invalid_argument("unknown constraint level '" + text + "'");
}

void check_spec(const ModelSpec& spec, const OrdinalDataset& dataset) {
    if (spec.item_names.empty()) throw std::invalid_argument("model has no items");
    std::set<std::string> seen;
    for (const auto& name : spec.item_names) {
        if (dataset.item_index(name) < 0) throw std::invalid_argument("item '" + name + "' not in dataset");
        if (!seen.insert(name).second) throw std::invalid_argument("item '" + name + "' listed twice");
    }
    for (const auto& a : spec.anchor_set) {
        if (dataset.item_index(a) < 0) throw std::invalid_argument("anchor item '" + a + "' not present in dataset");
        if (!seen.count(a)) throw std::invalid_argument("anchor item '" + a + "' not among model items");
    }
    if (spec.constraint_level == ConstraintLevel::partial_scalar_anchor && spec.anchor_set.empty()) {
        throw std::invalid_argument("partial_scalar_anchor requires a nonempty anchor set");
    }
    if (!spec.reference_group.empty() && dataset.group_index(spec.reference_group) < 0) {
        throw std::invalid_argument("reference group '" + spec.reference_group + "' not in dataset");
    }
    if (spec.quadrature_points < 7 || spec.quadrature_points % 2 == 0) {
        throw std::invalid_argument("quadrature_points must be odd and >= 7");
    }
    if (spec.include_structural && !dataset.has_outcome()) {
        throw std::invalid_argument("structural model requested but dataset has no outcome");
    }
    for (const auto& [name, value] : spec.fixed_loadings) {
        if (!seen.count(name)) throw std::invalid_argument("fixed loading for unknown item '" + name + "'");
        if (!std::isfinite(value)) throw std::invalid_argument("fixed loading must be finite");
    }
}

void ParameterSet::validate() const {
    if (groups.empty()) throw std::invalid_argument("parameter set has no groups");
    if (reference_group < 0 || reference_group >= static_cast<int>(groups.size())) {
        throw std::invalid_argument("reference group index out of range");
    }
    const std::size_t n_items = groups.front().loadings.size();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& gp = groups[g];
        if (gp.loadings.size() != n_items || gp.thresholds.size() != n_items ||
            gp.residual_variances.size() != n_items) {
            throw std::invalid_argument("inconsistent item count in group " + std::to_string(g));
        }
        for (std::size_t j = 0; j < n_items; ++j) {
            const auto& t = gp.thresholds[j];
            if (t.empty()) throw std::invalid_argument("item needs at least one threshold");
            for (std::size_t k = 0; k < t.size(); ++k) {
                if (!std::isfinite(t[k])) throw std::invalid_argument("non-finite threshold");
                if (k > 0 && !(t[k] > t[k - 1])) {
                    throw std::invalid_argument("thresholds not strictly increasing (group " + std::to_string(g) +
                                                ", item " + std::to_string(j) + ")");
                }
            }
            if (!(gp.residual_variances[j] > 0.0)) throw std::invalid_argument("residual variance must be > 0");
        }
        if (!(gp.latent_variance > 0.0)) throw std::invalid_argument("latent variance must be > 0");
        if (gp.structural && !(gp.structural->residual_variance > 0.0)) {
            throw std::invalid_argument("structural residual variance must be > 0");
        }
    }
    const auto& ref = groups[static_cast<std::size_t>(reference_group)];
    if (ref.latent_mean != 0.0 || ref.latent_variance != 1.0) {
        throw std::invalid_argument("reference group must have latent mean 0 and variance 1");
    }
}

namespace {

constexpr std::pair<ParamKind, const char*> kKindNames[] = {
    {ParamKind::loading, "loading"},
    {ParamKind::threshold, "threshold"},
    {ParamKind::latent_mean, "latent_mean"},
    {ParamKind::latent_variance, "latent_variance"},
    {ParamKind::residual_variance, "residual_variance"},
    {ParamKind::latent_intercept, "latent_intercept"},
    {ParamKind::struct_intercept, "struct_intercept"},
    {ParamKind::struct_slope, "struct_slope"},
    {ParamKind::struct_covariate, "struct_covariate"},
    {ParamKind::struct_variance, "struct_variance"},
};

}  // namespace

std::string to_string(ParamKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

ParamKind parse_param_kind(const std::string& text) {
    for (const auto& [k, name] : kKindNames) {
        if (text == name) return k;
    }
    throw std::invalid_argument("unknown parameter kind '" + text + "'");
}

std::string to_string(const Coordinate& c) {
    std::ostringstream os;
    os << to_string(c.kind) << "[g" << c.group;
    if (c.item >= 0) os << ",i" << c.item;
    if (c.index >= 0) os << ",k" << c.index + 1;
    os << "]";
    return os.str();
}

namespace {

StructuralParameters& structural_of(ParameterSet& p, int g) {
    auto& s = p.groups.at(static_cast<std::size_t>(g)).structural;
    if (!s) throw std::out_of_range("group has no structural parameters");
    return *s;
}

const StructuralParameters& structural_of(const ParameterSet& p, int g) {
    const auto& s = p.groups.at(static_cast<std::size_t>(g)).structural;
    if (!s) throw std::out_of_range("group has no structural parameters");
    return *s;
}

}  // namespace

double get_value(const ParameterSet& p, const Coordinate& c) {
    const auto g = static_cast<std::size_t>(c.group);
    const auto j = static_cast<std::size_t>(c.item);
    const auto k = static_cast<std::size_t>(c.index);
    switch (c.kind) {
        case ParamKind::loading: return p.groups.at(g).loadings.at(j);
        case ParamKind::threshold: return p.groups.at(g).thresholds.at(j).at(k);
        case ParamKind::latent_mean: return p.groups.at(g).latent_mean;
        case ParamKind::latent_variance: return p.groups.at(g).latent_variance;
        case ParamKind::residual_variance: return p.groups.at(g).residual_variances.at(j);
        case ParamKind::latent_intercept: return p.latent_intercepts.at(j);
        case ParamKind::struct_intercept: return structural_of(p, c.group).intercept;
        case ParamKind::struct_slope: return structural_of(p, c.group).slope;
        case ParamKind::struct_covariate: return structural_of(p, c.group).covariate_effects.at(k);
        case ParamKind::struct_variance: return structural_of(p, c.group).residual_variance;
    }
    throw std::logic_error("unhandled coordinate kind");
}

void set_value(ParameterSet& p, const Coordinate& c, double value) {
    const auto g = static_cast<std::size_t>(c.group);
    const auto j = static_cast<std::size_t>(c.item);
    const auto k = static_cast<std::size_t>(c.index);
    switch (c.kind) {
        case ParamKind::loading: p.groups.at(g).loadings.at(j) = value; return;
        case ParamKind::threshold: p.groups.at(g).thresholds.at(j).at(k) = value; return;
        case ParamKind::latent_mean: p.groups.at(g).latent_mean = value; return;
        case ParamKind::latent_variance: p.groups.at(g).latent_variance = value; return;
        case ParamKind::residual_variance: p.groups.at(g).residual_variances.at(j) = value; return;
        case ParamKind::latent_intercept: p.latent_intercepts.at(j) = value; return;
        case ParamKind::struct_intercept: structural_of(p, c.group).intercept = value; return;
        case ParamKind::struct_slope: structural_of(p, c.group).slope = value; return;
        case ParamKind::struct_covariate: structural_of(p, c.group).covariate_effects.at(k) = value; return;
        case ParamKind::struct_variance: structural_of(p, c.group).residual_variance = value; return;
    }
    throw std::logic_error("unhandled coordinate kind");
}

std::vector<Coordinate> ConstraintSet::free_coordinates() const {
    std::set<Coordinate> bound;
    for (const auto& t : ties) bound.insert(t.tied);
    for (const auto& f : fixed) bound.insert(f.coord);
    std::vector<Coordinate> out;
    for (const auto& c : coordinates) {
        if (!bound.count(c)) out.push_back(c);
    }
    return out;
}

std::size_t ConstraintSet::n_free() const { return free_coordinates().size(); }

const Tie* ConstraintSet::find_tie(const Coordinate& c) const {
    for (const auto& t : ties) {
        if (t.tied == c) return &t;
    }
    return nullptr;
}

const FixedValue* ConstraintSet::find_fixed(const Coordinate& c) const {
    for (const auto& f : fixed) {
        if (f.coord == c) return &f;
    }
    return nullptr;
}

bool ConstraintSet::is_fixed(const Coordinate& c) const { return find_fixed(c) != nullptr; }

void ConstraintSet::check() const {
    std::set<Coordinate> tied;
    for (const auto& t : ties) {
        if (!tied.insert(t.tied).second) throw std::logic_error("coordinate tied twice: " + to_string(t.tied));
        if (find_tie(t.target) != nullptr) throw std::logic_error("tie target is itself tied: " + to_string(t.target));
    }
    std::set<Coordinate> fixed_set;
    for (const auto& f : fixed) {
        if (!fixed_set.insert(f.coord).second) throw std::logic_error("coordinate fixed twice: " + to_string(f.coord));
        if (tied.count(f.coord)) throw std::logic_error("coordinate both tied and fixed: " + to_string(f.coord));
    }
}

ConstraintSet build_constraints(const ModelSpec& spec, const OrdinalDataset& dataset) {
    check_spec(spec, dataset);

    ConstraintSet cs;
    cs.n_groups = static_cast<int>(dataset.n_groups());
    cs.reference_group = spec.reference_group.empty() ? 0 : dataset.group_index(spec.reference_group);
    cs.structural = spec.include_structural;
    cs.n_covariates = spec.include_structural ? static_cast<int>(dataset.covariate_names.size()) : 0;

    std::vector<int> anchor;
    const int n_items = static_cast<int>(spec.item_names.size());
    for (const auto& name : spec.item_names) {
        const auto& item = dataset.items[static_cast<std::size_t>(dataset.item_index(name))];
        cs.n_categories.push_back(item.n_categories);
        anchor.push_back(std::find(spec.anchor_set.begin(), spec.anchor_set.end(), name) != spec.anchor_set.end());
    }
    std::vector<std::optional<double>> fixed_loading(static_cast<std::size_t>(n_items));
    for (int j = 0; j < n_items; ++j) {
        auto it = spec.fixed_loadings.find(spec.item_names[static_cast<std::size_t>(j)]);
        if (it != spec.fixed_loadings.end()) fixed_loading[static_cast<std::size_t>(j)] = it->second;
    }

    for (int g = 0; g < cs.n_groups; ++g) {
        for (int j = 0; j < n_items; ++j) cs.coordinates.push_back({ParamKind::loading, g, j, -1});
        for (int j = 0; j < n_items; ++j) {
            for (int k = 0; k < cs.n_categories[static_cast<std::size_t>(j)] - 1; ++k) {
                cs.coordinates.push_back({ParamKind::threshold, g, j, k});
            }
        }
        cs.coordinates.push_back({ParamKind::latent_mean, g, -1, -1});
        cs.coordinates.push_back({ParamKind::latent_variance, g, -1, -1});
        for (int j = 0; j < n_items; ++j) cs.coordinates.push_back({ParamKind::residual_variance, g, j, -1});
        if (cs.structural) {
            cs.coordinates.push_back({ParamKind::struct_intercept, g, -1, -1});
            cs.coordinates.push_back({ParamKind::struct_slope, g, -1, -1});
            for (int c = 0; c < cs.n_covariates; ++c) {
                cs.coordinates.push_back({ParamKind::struct_covariate, g, -1, c});
            }
            cs.coordinates.push_back({ParamKind::struct_variance, g, -1, -1});
        }
    }
    for (int j = 0; j < n_items; ++j) cs.coordinates.push_back({ParamKind::latent_intercept, 0, j, -1});

    const auto level = spec.constraint_level;
    const bool tie_loadings = level != ConstraintLevel::configural;
    const bool mean_free = level == ConstraintLevel::scalar || level == ConstraintLevel::partial_scalar_anchor;
    const bool variance_free = level != ConstraintLevel::configural;
    const int ref = cs.reference_group;

    for (int g = 0; g < cs.n_groups; ++g) {
        const bool is_ref = g == ref;
        for (int j = 0; j < n_items; ++j) {
            const Coordinate lam{ParamKind::loading, g, j, -1};
            if (fixed_loading[static_cast<std::size_t>(j)]) {
                cs.fixed.push_back({lam, *fixed_loading[static_cast<std::size_t>(j)]});
            } else if (!is_ref && tie_loadings) {
                cs.ties.push_back({lam, {ParamKind::loading, ref, j, -1}});
            }
        }
        if (!is_ref) {
            for (int j = 0; j < n_items; ++j) {
                bool tie_tau = false;
                switch (level) {
                    case ConstraintLevel::scalar:
                    case ConstraintLevel::scalar_fv: tie_tau = true; break;
                    case ConstraintLevel::partial_scalar_anchor: tie_tau = anchor[static_cast<std::size_t>(j)]; break;
                    default: break;
                }
                if (!tie_tau) continue;
                for (int k = 0; k < cs.n_categories[static_cast<std::size_t>(j)] - 1; ++k) {
                    cs.ties.push_back({{ParamKind::threshold, g, j, k}, {ParamKind::threshold, ref, j, k}});
                }
            }
        }
        const Coordinate mu{ParamKind::latent_mean, g, -1, -1};
        const Coordinate phi{ParamKind::latent_variance, g, -1, -1};
        if (is_ref) {
            cs.fixed.push_back({mu, 0.0});
            cs.fixed.push_back({phi, 1.0});
        } else {
            if (level == ConstraintLevel::scalar_fv) {
                cs.ties.push_back({mu, {ParamKind::latent_mean, ref, -1, -1}});
            } else if (!mean_free) {
                cs.fixed.push_back({mu, 0.0});
            }
            if (level == ConstraintLevel::scalar_fv && spec.fv_constrain_variance) {
                cs.ties.push_back({phi, {ParamKind::latent_variance, ref, -1, -1}});
            } else if (!variance_free) {
                cs.fixed.push_back({phi, 1.0});
            }
        }
        for (int j = 0; j < n_items; ++j) cs.fixed.push_back({{ParamKind::residual_variance, g, j, -1}, 1.0});
        if (cs.structural && !is_ref && spec.pooled_slope) {
            cs.ties.push_back({{ParamKind::struct_slope, g, -1, -1}, {ParamKind::struct_slope, ref, -1, -1}});
        }
    }
    for (int j = 0; j < n_items; ++j) cs.fixed.push_back({{ParamKind::latent_intercept, 0, j, -1}, 0.0});

    cs.check();
    return cs;
}

bool is_nested(const ConstraintSet& restricted, const ConstraintSet& unrestricted) {
    if (restricted.coordinates != unrestricted.coordinates) return false;
    if (restricted.reference_group != unrestricted.reference_group) return false;
    for (const auto& t : unrestricted.ties) {
        if (std::find(restricted.ties.begin(), restricted.ties.end(), t) == restricted.ties.end()) return false;
    }
    return restricted.n_free() < unrestricted.n_free();
}

ParameterSet make_parameter_shape(const ConstraintSet& cs) {
    ParameterSet p;
    p.reference_group = cs.reference_group;
    const std::size_t n_items = cs.n_categories.size();
    p.latent_intercepts.assign(n_items, 0.0);
    p.groups.resize(static_cast<std::size_t>(cs.n_groups));
    for (auto& gp : p.groups) {
        gp.loadings.assign(n_items, 0.0);
        gp.residual_variances.assign(n_items, 1.0);
        gp.thresholds.resize(n_items);
        for (std::size_t j = 0; j < n_items; ++j) {
            gp.thresholds[j].assign(static_cast<std::size_t>(cs.n_categories[j] - 1), 0.0);
        }
        if (cs.structural) {
            StructuralParameters s;
            s.covariate_effects.assign(static_cast<std::size_t>(cs.n_covariates), 0.0);
            gp.structural = s;
        }
    }
    return p;
}

ParameterSet apply_constraints(const ConstraintSet& cs, ParameterSet params) {
    for (const auto& f : cs.fixed) set_value(params, f.coord, f.value);
    for (const auto& t : cs.ties) set_value(params, t.tied, get_value(params, t.target));
    return params;
}

}  // namespace ordinv

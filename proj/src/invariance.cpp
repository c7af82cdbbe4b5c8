#include "ordinv/invariance.hpp"

#include <algorithm>
#include <stdexcept>

namespace ordinv {

int model_df(const ConstraintSet& constraints, std::size_t n_free) {
    const int n_items = static_cast<int>(constraints.n_categories.size());
    int moments = n_items * (n_items - 1) / 2;
    for (int k : constraints.n_categories) moments += k - 1;
    return constraints.n_groups * moments - static_cast<int>(n_free);
}

namespace {

void require_groups(const OrdinalDataset& dataset) {
    if (dataset.n_groups() < 2) throw std::invalid_argument("invariance requires ≥ 2 groups");
}

FitResult fit_level(const OrdinalDataset& dataset, const ModelSpec& spec, const InvarianceOptions& options,
                    const FitResult* previous) {
    FitOptions opt = options.fit;
    opt.compute_standard_errors = false;
    if (previous && previous->converged) {
        opt.start = previous->params;
        FitResult warm = fit(dataset, spec, opt);
        if (warm.converged) return warm;
    }
    opt.start.reset();
    return fit(dataset, spec, opt);
}

LadderResult run_ladder(const OrdinalDataset& dataset, ModelSpec spec, const std::vector<ConstraintLevel>& levels,
                        const InvarianceOptions& options) {
    LadderResult out;
    out.items = spec.item_names;
    out.group_labels = dataset.groups;
    out.alpha = options.alpha;

    std::vector<FitResult> fits;
    bool chain_broken = false;
    for (ConstraintLevel level : levels) {
        spec.constraint_level = level;
        FitResult f = fit_level(dataset, spec, options, fits.empty() ? nullptr : &fits.back());
        LadderRow row;
        row.level = to_string(level);
        row.n_free = static_cast<int>(f.n_free);
        row.df_model = model_df(f.constraints, f.n_free);
        row.loglik = f.loglik;
        row.converged = f.converged;
        if (!f.converged) {
            out.warnings.push_back(row.level + " fit did not converge: " + f.message);
        }
        if (!fits.empty() && !chain_broken && f.converged) {
            try {
                const LrtResult t = lrt(f, fits.back());
                row.delta_chisq = t.delta_chisq;
                row.raw_delta_chisq = t.raw_delta_chisq;
                row.delta_df = t.delta_df;
                row.p_value = t.p_value;
                row.verdict = t.p_value >= options.alpha ? "pass" : "fail";
            } catch (const std::invalid_argument& e) {
                out.warnings.push_back(row.level + ": " + e.what());
            }
        }
        if (!f.converged) chain_broken = true;
        if (fits.empty()) out.reference_group = dataset.groups[static_cast<std::size_t>(f.constraints.reference_group)];
        out.rows.push_back(std::move(row));
        fits.push_back(std::move(f));
    }
    return out;
}

}  // namespace

LadderResult run_anchor_validation(const OrdinalDataset& dataset, const std::vector<std::string>& anchor_items,
                                   const InvarianceOptions& options) {
    require_groups(dataset);
    if (anchor_items.size() < 2) throw std::invalid_argument("anchor validation needs at least 2 anchor items");
    std::vector<std::string> ordered;
    for (const auto& item : dataset.items) {
        if (std::find(anchor_items.begin(), anchor_items.end(), item.name) != anchor_items.end()) {
            ordered.push_back(item.name);
        }
    }
    for (const auto& name : anchor_items) {
        if (dataset.item_index(name) < 0) throw std::invalid_argument("anchor item '" + name + "' not present in dataset");
    }
    if (ordered.size() != anchor_items.size()) throw std::invalid_argument("anchor items must be distinct");

    ModelSpec spec;
    spec.item_names = ordered;
    spec.reference_group = options.reference_group;
    spec.quadrature_points = options.quadrature_points;
    return run_ladder(dataset, spec,
                      {ConstraintLevel::configural, ConstraintLevel::metric, ConstraintLevel::scalar}, options);
}

LadderResult run_invariance_ladder(const OrdinalDataset& dataset, const ModelSpec& spec,
                                   const InvarianceOptions& options) {
    require_groups(dataset);
    ModelSpec s = spec;
    if (s.item_names.empty()) {
        for (const auto& item : dataset.items) s.item_names.push_back(item.name);
    }
    s.anchor_set.clear();
    s.include_structural = false;
    if (!options.reference_group.empty()) s.reference_group = options.reference_group;
    s.quadrature_points = options.quadrature_points;
    s.fv_constrain_variance = options.fv_constrain_variance;
    return run_ladder(dataset, s,
                      {ConstraintLevel::configural, ConstraintLevel::metric, ConstraintLevel::scalar,
                       ConstraintLevel::scalar_fv},
                      options);
}

ModelSpec build_partial_spec(const OrdinalDataset& dataset, const std::vector<std::string>& anchor_items,
                             std::vector<std::string>* warnings) {
    if (anchor_items.empty()) throw std::invalid_argument("partial_scalar_anchor requires a nonempty anchor set");
    if (dataset.groups.empty()) throw std::invalid_argument("dataset has no groups");
    ModelSpec spec;
    for (const auto& item : dataset.items) spec.item_names.push_back(item.name);
    for (const auto& name : anchor_items) {
        if (dataset.item_index(name) < 0) throw std::invalid_argument("anchor item '" + name + "' not present in dataset");
    }
    spec.anchor_set = anchor_items;
    spec.constraint_level = ConstraintLevel::partial_scalar_anchor;
    spec.reference_group = dataset.groups.front();
    if (anchor_items.size() == 1 && warnings) {
        warnings->push_back("identification rests on a single anchor item ('" + anchor_items.front() + "')");
    }
    return spec;
}

}  // namespace ordinv

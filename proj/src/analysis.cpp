#include "ordinv/analysis.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ordinv {

namespace {

int default_focal(int reference, std::size_t n_groups, int focal) {
    if (n_groups < 2) throw std::invalid_argument("comparison needs at least 2 groups");
    if (focal < 0) return reference == 0 ? 1 : 0;
    if (static_cast<std::size_t>(focal) >= n_groups || focal == reference) {
        throw std::invalid_argument("focal group must be a non-reference group");
    }
    return focal;
}

// Variance of a'x for a sparse set of (free index, coefficient) pairs.
std::optional<double> linear_variance(const Eigen::MatrixXd& cov, const std::vector<std::pair<int, double>>& terms) {
    double v = 0.0;
    for (const auto& [i, a] : terms) {
        for (const auto& [j, b] : terms) {
            if (i < 0 || j < 0 || i >= cov.rows() || j >= cov.cols()) return std::nullopt;
            const double c = cov(i, j);
            if (!std::isfinite(c)) return std::nullopt;
            v += a * b * c;
        }
    }
    return v;
}

}  // namespace

ThresholdDiffTable threshold_differences(const ParameterSet& params, const std::vector<ItemDescriptor>& items,
                                         const std::vector<std::string>& group_labels, int reference, int focal) {
    if (params.groups.size() < 2) throw std::invalid_argument("threshold differences need a multi-group fit");
    focal = default_focal(reference, params.groups.size(), focal);
    const auto& ref = params.groups.at(static_cast<std::size_t>(reference));
    const auto& foc = params.groups.at(static_cast<std::size_t>(focal));
    ThresholdDiffTable table;
    table.reference_group = group_labels.at(static_cast<std::size_t>(reference));
    table.focal_group = group_labels.at(static_cast<std::size_t>(focal));
    for (std::size_t j = 0; j < items.size(); ++j) {
        for (std::size_t k = 0; k < ref.thresholds.at(j).size(); ++k) {
            ThresholdDiffRow row;
            row.item = items[j].name;
            row.role = items[j].role;
            row.threshold = static_cast<int>(k) + 1;
            row.tau_reference = ref.thresholds[j][k];
            row.tau_focal = foc.thresholds.at(j).at(k);
            row.delta = row.tau_focal - row.tau_reference;
            table.rows.push_back(row);
        }
    }
    return table;
}

ThresholdDiffTable threshold_differences(const FitResult& fit, int focal) {
    const int reference = fit.params.reference_group;
    focal = default_focal(reference, fit.params.groups.size(), focal);
    ThresholdDiffTable table = threshold_differences(fit.params, fit.items, fit.group_labels, reference, focal);
    if (fit.covariance.size() == 0) return table;
    std::size_t r = 0;
    for (std::size_t j = 0; j < fit.items.size(); ++j) {
        const std::size_t n_thresholds = fit.params.groups[static_cast<std::size_t>(reference)].thresholds[j].size();
        for (std::size_t k = 0; k < n_thresholds; ++k, ++r) {
            const int item = static_cast<int>(j), index = static_cast<int>(k);
            const Coordinate cf{ParamKind::threshold, focal, item, index};
            const Coordinate cr{ParamKind::threshold, reference, item, index};
            const int f = fit.resolved_index(cf);
            const int e = fit.resolved_index(cr);
            std::vector<std::pair<int, double>> terms;
            if (f != e) {
                if (f >= 0) terms.emplace_back(f, 1.0);
                else if (!fit.constraints.is_fixed(cf)) continue;
                if (e >= 0) terms.emplace_back(e, -1.0);
                else if (!fit.constraints.is_fixed(cr)) continue;
            }
            if (auto v = linear_variance(fit.covariance, terms)) table.rows[r].se = std::sqrt(std::max(0.0, *v));
        }
    }
    return table;
}

LatentGap latent_gap(const FitResult& fit, int focal) {
    const int reference = fit.params.reference_group;
    focal = default_focal(reference, fit.params.groups.size(), focal);
    const Coordinate mu{ParamKind::latent_mean, focal, -1, -1};
    if (fit.free_index(mu) < 0) throw std::invalid_argument("latent mean not identified at this level");
    LatentGap gap;
    gap.reference_group = fit.group_labels.at(static_cast<std::size_t>(reference));
    gap.focal_group = fit.group_labels.at(static_cast<std::size_t>(focal));
    gap.estimate = fit.params.groups[static_cast<std::size_t>(focal)].latent_mean -
                   fit.params.groups[static_cast<std::size_t>(reference)].latent_mean;
    gap.se = fit.standard_error(mu);
    return gap;
}

std::vector<EapScore> eap_scores(const ParameterSet& params, const OrdinalDataset& dataset, const QuadratureRule& rule) {
    const std::size_t n_items = dataset.items.size();
    const std::size_t q = rule.count();
    // log P(category | node) per group, item, category, node.
    std::vector<std::vector<std::vector<double>>> table(params.groups.size());
    for (std::size_t g = 0; g < params.groups.size(); ++g) {
        const auto& gp = params.groups[g];
        const double sd = std::sqrt(gp.latent_variance);
        table[g].resize(n_items);
        for (std::size_t j = 0; j < n_items; ++j) {
            const int n_cat = dataset.items[j].n_categories;
            const double intercept = params.latent_intercepts.empty() ? 0.0 : params.latent_intercepts[j];
            auto& t = table[g][j];
            t.resize(static_cast<std::size_t>(n_cat) * q);
            for (int k = 1; k <= n_cat; ++k) {
                for (std::size_t m = 0; m < q; ++m) {
                    const double eta = gp.latent_mean + sd * rule.nodes[m];
                    const double p = category_probability(gp.loadings[j], gp.thresholds[j], gp.residual_variances[j],
                                                          eta, k, intercept);
                    t[static_cast<std::size_t>(k - 1) * q + m] = std::log(p);
                }
            }
        }
    }

    std::vector<EapScore> out(dataset.rows.size());
    std::vector<double> logpost(q);
    for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
        const auto& row = dataset.rows[i];
        const auto g = static_cast<std::size_t>(row.group_index);
        const auto& gp = params.groups.at(g);
        const double sd = std::sqrt(gp.latent_variance);
        bool any = false;
        for (std::size_t m = 0; m < q; ++m) logpost[m] = std::log(rule.weights[m]);
        for (std::size_t j = 0; j < n_items; ++j) {
            const Response y = row.responses[j];
            if (y == kMissing) continue;
            any = true;
            const double* t = &table[g][j][static_cast<std::size_t>(y - 1) * q];
            for (std::size_t m = 0; m < q; ++m) logpost[m] += t[m];
        }
        if (!any) {
            out[i] = {gp.latent_mean, sd};
            continue;
        }
        double peak = -std::numeric_limits<double>::infinity();
        for (double v : logpost) peak = std::max(peak, v);
        double mass = 0.0, m1 = 0.0;
        for (std::size_t m = 0; m < q; ++m) {
            const double w = std::exp(logpost[m] - peak);
            mass += w;
            m1 += w * rule.nodes[m];
        }
        m1 /= mass;
        double m2 = 0.0;
        for (std::size_t m = 0; m < q; ++m) {
            const double d = rule.nodes[m] - m1;
            m2 += std::exp(logpost[m] - peak) * d * d;
        }
        m2 /= mass;
        out[i] = {gp.latent_mean + sd * m1, sd * std::sqrt(m2)};
    }
    return out;
}

std::vector<EapScore> eap_scores(const FitResult& fit, const OrdinalDataset& dataset) {
    const OrdinalDataset data = select_items(dataset, fit.spec_echo.item_names);
    return eap_scores(fit.params, data, gauss_hermite(fit.spec_echo.quadrature_points));
}

std::string to_string(StructuralMode mode) { return mode == StructuralMode::joint ? "joint" : "two_step"; }

StructuralMode parse_structural_mode(const std::string& text) {
    if (text == "joint") return StructuralMode::joint;
    if (text == "two_step") return StructuralMode::two_step;
    throw std::invalid_argument("unknown structural mode '" + text + "'");
}

OlsResult ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& column_names) {
    const Eigen::Index n = x.rows(), p = x.cols();
    // Add columns one at a time; a column already spanned by the accepted ones
    // is reported together with the columns that reproduce it.
    std::vector<Eigen::Index> accepted;
    for (Eigen::Index c = 0; c < p; ++c) {
        const double norm = x.col(c).norm();
        std::vector<std::string> culprits;
        if (norm == 0.0) {
            culprits.push_back(column_names[static_cast<std::size_t>(c)]);
        } else if (!accepted.empty()) {
            Eigen::MatrixXd basis(n, static_cast<Eigen::Index>(accepted.size()));
            for (std::size_t a = 0; a < accepted.size(); ++a) basis.col(static_cast<Eigen::Index>(a)) = x.col(accepted[a]);
            const Eigen::VectorXd b = basis.colPivHouseholderQr().solve(x.col(c));
            const double resid = (x.col(c) - basis * b).norm();
            if (resid <= 1e-9 * norm) {
                for (std::size_t a = 0; a < accepted.size(); ++a) {
                    if (std::abs(b(static_cast<Eigen::Index>(a))) > 1e-8) {
                        culprits.push_back(column_names[static_cast<std::size_t>(accepted[a])]);
                    }
                }
                culprits.push_back(column_names[static_cast<std::size_t>(c)]);
            }
        }
        if (!culprits.empty()) {
            std::string msg = "collinear regressors:";
            for (std::size_t i = 0; i < culprits.size(); ++i) msg += (i ? ", " : " ") + culprits[i];
            throw CollinearityError(msg, culprits);
        }
        accepted.push_back(c);
    }
    if (n <= p) throw std::invalid_argument("regression needs more rows than columns");
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    OlsResult r;
    r.coef = ldlt.solve(x.transpose() * y);
    const Eigen::VectorXd resid = y - x * r.coef;
    r.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    r.se = (inv.diagonal() * r.residual_variance).cwiseMax(0.0).cwiseSqrt();
    return r;
}

void set_policy_difference(PolicyEffect& e, std::optional<double> cov_beta_gap) {
    e.delta_policy = e.beta_used * e.latent_gap;
    e.independence_assumed = !cov_beta_gap.has_value();
    if (e.beta_used_se && e.latent_gap_se) {
        const double v = e.latent_gap * e.latent_gap * *e.beta_used_se * *e.beta_used_se +
                         e.beta_used * e.beta_used * *e.latent_gap_se * *e.latent_gap_se +
                         2.0 * e.beta_used * e.latent_gap * cov_beta_gap.value_or(0.0);
        e.delta_policy_se = std::sqrt(std::max(0.0, v));
    } else {
        e.delta_policy_se.reset();
    }
}

namespace {

bool outcome_complete(const Respondent& row) {
    if (!row.outcome || !std::isfinite(*row.outcome)) return false;
    for (double c : row.covariates) {
        if (!std::isfinite(c)) return false;
    }
    return true;
}

}  // namespace

PolicyEffect structural_effect(const OrdinalDataset& dataset, const ModelSpec& spec, const StructuralOptions& options) {
    if (!dataset.has_outcome()) throw std::invalid_argument("dataset has no outcome column");
    if (dataset.n_groups() < 2) throw std::invalid_argument("policy difference needs at least 2 groups");
    OrdinalDataset data = dataset;
    const std::size_t n_groups = data.n_groups();
    const std::size_t n_cov = data.covariate_names.size();

    PolicyEffect e;
    e.outcome = data.outcome_name;
    e.mode = options.mode;
    e.group_labels = data.groups;
    e.covariates = data.covariate_names;

    std::vector<std::size_t> complete;
    std::vector<int> per_group(n_groups, 0);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        if (!outcome_complete(data.rows[i])) continue;
        complete.push_back(i);
        ++per_group[static_cast<std::size_t>(data.rows[i].group_index)];
        sum += *data.rows[i].outcome;
        sum2 += *data.rows[i].outcome * *data.rows[i].outcome;
    }
    e.n_complete = complete.size();
    if (complete.size() < 3) throw std::invalid_argument("too few rows with a complete outcome and covariates");
    if (options.standardize_outcome) {
        const double n = static_cast<double>(complete.size());
        const double mean = sum / n;
        const double sd = std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)));
        if (!(sd > 0.0)) throw std::invalid_argument("outcome has zero variance");
        for (auto& row : data.rows) {
            if (row.outcome) row.outcome = (*row.outcome - mean) / sd;
        }
        e.outcome_standardized = true;
        e.outcome_mean = mean;
        e.outcome_sd = sd;
    }

    bool pooled = spec.pooled_slope;
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (per_group[g] < options.min_rows_per_group && !pooled) {
            pooled = true;
            e.warnings.push_back("group '" + data.groups[g] + "' has " + std::to_string(per_group[g]) +
                                 " complete outcome rows; using a pooled slope");
        }
    }
    e.pooled = pooled;

    ModelSpec measurement = spec;
    measurement.include_structural = false;
    FitOptions fit_opt = options.fit;
    const FitResult mfit = fit(data, measurement, fit_opt);
    if (!mfit.converged) throw ConvergenceError("measurement model did not converge: " + mfit.message);
    const int reference = mfit.params.reference_group;
    const int focal = default_focal(reference, n_groups, options.focal);
    e.reference_group = data.groups[static_cast<std::size_t>(reference)];
    e.focal_group = data.groups[static_cast<std::size_t>(focal)];
    const LatentGap gap = latent_gap(mfit, focal);

    // Regression of the outcome on EAP scores: the two-step estimate and the
    // joint-mode starting point.
    const std::vector<EapScore> eap = eap_scores(mfit, data);
    const Eigen::Index per_group_cols = static_cast<Eigen::Index>(1 + (pooled ? 0 : 1) + n_cov);
    const Eigen::Index n_cols = static_cast<Eigen::Index>(n_groups) * per_group_cols + (pooled ? 1 : 0);
    const Eigen::Index slope_col = static_cast<Eigen::Index>(n_groups) * per_group_cols;
    auto col_intercept = [&](std::size_t g) { return static_cast<Eigen::Index>(g) * per_group_cols; };
    auto col_slope = [&](std::size_t g) { return pooled ? slope_col : col_intercept(g) + 1; };
    auto col_cov = [&](std::size_t g, std::size_t c) {
        return col_intercept(g) + (pooled ? 1 : 2) + static_cast<Eigen::Index>(c);
    };
    std::vector<std::string> names(static_cast<std::size_t>(n_cols));
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::string suffix = " (" + data.groups[g] + ")";
        names[static_cast<std::size_t>(col_intercept(g))] = "intercept" + suffix;
        if (!pooled) names[static_cast<std::size_t>(col_slope(g))] = "latent score" + suffix;
        for (std::size_t c = 0; c < n_cov; ++c) names[static_cast<std::size_t>(col_cov(g, c))] = data.covariate_names[c] + suffix;
    }
    if (pooled) names[static_cast<std::size_t>(slope_col)] = "latent score";

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(complete.size()), n_cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(complete.size()));
    for (std::size_t r = 0; r < complete.size(); ++r) {
        const auto& row = data.rows[complete[r]];
        const auto g = static_cast<std::size_t>(row.group_index);
        const auto ri = static_cast<Eigen::Index>(r);
        x(ri, col_intercept(g)) = 1.0;
        x(ri, col_slope(g)) = eap[complete[r]].score;
        for (std::size_t c = 0; c < n_cov; ++c) x(ri, col_cov(g, c)) = row.covariates[c];
        y(ri) = *row.outcome;
    }
    const OlsResult reg = ols(x, y, names);

    e.beta.assign(n_groups, 0.0);
    e.beta_se.assign(n_groups, std::nullopt);
    e.covariate_effects.assign(n_groups, std::vector<double>(n_cov, 0.0));

    if (options.mode == StructuralMode::two_step) {
        for (std::size_t g = 0; g < n_groups; ++g) {
            e.beta[g] = reg.coef(col_slope(g));
            e.beta_se[g] = reg.se(col_slope(g));
            for (std::size_t c = 0; c < n_cov; ++c) e.covariate_effects[g][c] = reg.coef(col_cov(g, c));
        }
        e.latent_gap = gap.estimate;
        e.latent_gap_se = gap.se;
        e.beta_used = e.beta[static_cast<std::size_t>(reference)];
        e.beta_used_se = e.beta_se[static_cast<std::size_t>(reference)];
        set_policy_difference(e, std::nullopt);
        return e;
    }

    ModelSpec joint = spec;
    joint.include_structural = true;
    joint.pooled_slope = pooled;
    const ConstraintSet cs = build_constraints(joint, data);
    ParameterSet start = make_parameter_shape(cs);
    for (std::size_t g = 0; g < n_groups; ++g) {
        auto& gp = start.groups[g];
        const auto& mp = mfit.params.groups[g];
        gp.loadings = mp.loadings;
        gp.thresholds = mp.thresholds;
        gp.latent_mean = mp.latent_mean;
        gp.latent_variance = mp.latent_variance;
        gp.residual_variances = mp.residual_variances;
        auto& s = *gp.structural;
        s.intercept = reg.coef(col_intercept(g));
        s.slope = reg.coef(col_slope(g));
        for (std::size_t c = 0; c < n_cov; ++c) s.covariate_effects[c] = reg.coef(col_cov(g, c));
        s.residual_variance = std::max(reg.residual_variance, 1e-6);
    }
    FitOptions joint_opt = options.fit;
    joint_opt.compute_standard_errors = true;
    joint_opt.start = start;
    FitResult jfit = fit(data, joint, joint_opt);
    if (!jfit.converged) {
        joint_opt.start.reset();
        jfit = fit(data, joint, joint_opt);
    }
    if (!jfit.converged) throw ConvergenceError("joint structural model did not converge: " + jfit.message);

    for (std::size_t g = 0; g < n_groups; ++g) {
        const auto& s = *jfit.params.groups[g].structural;
        e.beta[g] = s.slope;
        e.beta_se[g] = jfit.standard_error({ParamKind::struct_slope, static_cast<int>(g), -1, -1});
        e.covariate_effects[g] = s.covariate_effects;
    }
    const LatentGap jgap = latent_gap(jfit, focal);
    e.latent_gap = jgap.estimate;
    e.latent_gap_se = jgap.se;
    e.beta_used = e.beta[static_cast<std::size_t>(reference)];
    e.beta_used_se = e.beta_se[static_cast<std::size_t>(reference)];

    std::optional<double> cov;
    const int bi = jfit.resolved_index({ParamKind::struct_slope, reference, -1, -1});
    const int mi = jfit.resolved_index({ParamKind::latent_mean, focal, -1, -1});
    if (bi >= 0 && mi >= 0 && bi < jfit.covariance.rows() && mi < jfit.covariance.cols() &&
        std::isfinite(jfit.covariance(bi, mi))) {
        cov = jfit.covariance(bi, mi);
    }
    set_policy_difference(e, cov);
    return e;
}

}  // namespace ordinv

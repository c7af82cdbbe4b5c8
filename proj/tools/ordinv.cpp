// Command-line front end: validate, anchors, ladder, fit, dif, gap, policy,
// simulate, demo.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ordinv/analysis.hpp"
#include "ordinv/cli_io.hpp"
#include "ordinv/invariance.hpp"
#include "ordinv/simulation.hpp"

namespace fs = std::filesystem;
using namespace ordinv;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kNonConvergence = 3, kIo = 4 };

struct Common {
    std::string config;
    std::string data;
    std::string out;
    std::string format;
    std::string reference_group;
    std::optional<std::uint64_t> seed;
    std::optional<int> quadrature;
    std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON run configuration");
    sub->add_option("--data", c.data, "CSV file (overrides data.path)");
    sub->add_option("--seed", c.seed, "Seed for stochastic commands");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--format", c.format, "Output formats: table,structured");
    sub->add_option("--quadrature", c.quadrature, "Quadrature points (odd, >= 3)");
    sub->add_option("--reference-group", c.reference_group, "Reference group label");
    sub->add_option("--threads", c.threads, "Worker threads (results do not depend on this)");
}

RunConfig resolve(const Common& c, bool need_config) {
    RunConfig cfg;
    if (!c.config.empty()) {
        cfg = load_config(c.config);
    } else if (need_config) {
        throw InputError("--config is required for this command");
    }
    if (!c.data.empty()) {
        if (!cfg.data) throw InputError("--data needs a config with a data section");
        cfg.data->path = c.data;
    }
    if (!c.out.empty()) cfg.output.dir = c.out;
    if (!c.format.empty()) parse_formats(c.format, cfg.output);
    if (c.quadrature) cfg.model.quadrature_points = *c.quadrature;
    if (!c.reference_group.empty()) cfg.model.reference_group = c.reference_group;
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    if (cfg.threads < 1) throw InputError("--threads must be >= 1");
    return cfg;
}

std::string fixed(const std::optional<double>& v, int digits) {
    if (!v) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return buf;
}

void report_written(const std::vector<fs::path>& paths) {
    for (const auto& p : paths) std::cerr << "wrote " << p.string() << "\n";
}

void print_ladder(const LadderResult& ladder) {
    std::printf("%-22s %5s %14s %10s %5s %7s  %s\n", "level", "df", "loglik", "dchisq", "ddf", "p", "verdict");
    for (const auto& r : ladder.rows) {
        std::printf("%-22s %5d %14s %10s %5s %7s  %s%s\n", r.level.c_str(), r.df_model, fixed(r.loglik, 3).c_str(),
                    fixed(r.delta_chisq, 3).c_str(), r.delta_df ? std::to_string(*r.delta_df).c_str() : "-",
                    fixed(r.p_value, 3).c_str(), r.verdict.c_str(), r.converged ? "" : " (not converged)");
    }
    for (const auto& w : ladder.warnings) std::cerr << "warning: " << w << "\n";
}

bool ladder_converged(const LadderResult& ladder) {
    for (const auto& r : ladder.rows) {
        if (!r.converged) return false;
    }
    return true;
}

int cmd_validate(const Common& c) {
    const RunConfig cfg = resolve(c, true);
    if (!cfg.data) throw InputError("config has no data section");
    OrdinalDataset ds;
    std::vector<ValidationIssue> issues;
    try {
        ds = load_config_dataset(cfg);
        issues = check_dataset(ds, 2);
        try {
            check_spec(model_spec(cfg, ds), ds);
        } catch (const std::invalid_argument& e) {
            issues.push_back({-1, "", e.what()});
        }
    } catch (const ValidationError& e) {
        issues = e.issues();
    }
    report_written(emit_results(cfg.output, "validation", envelope("validation", validation_to_json(ds, issues)),
                                validation_table(issues)));
    if (issues.empty()) {
        std::printf("valid: %zu rows, %zu items, %zu groups\n", ds.rows.size(), ds.items.size(), ds.groups.size());
        return kOk;
    }
    for (const auto& i : issues) {
        std::printf("%s%s%s\n", i.row >= 0 ? ("row " + std::to_string(i.row + 1) + ": ").c_str() : "",
                    i.item.empty() ? "" : ("item " + i.item + ": ").c_str(), i.reason.c_str());
    }
    return kValidation;
}

InvarianceOptions invariance_options(const RunConfig& cfg) {
    InvarianceOptions o;
    o.quadrature_points = cfg.model.quadrature_points;
    o.reference_group = cfg.model.reference_group;
    o.alpha = cfg.alpha;
    o.fv_constrain_variance = cfg.model.fv_constrain_variance;
    return o;
}

int cmd_anchors(const Common& c, const std::vector<std::string>& anchor_override) {
    RunConfig cfg = resolve(c, true);
    if (!anchor_override.empty()) cfg.model.anchors = anchor_override;
    const OrdinalDataset ds = load_config_dataset(cfg);
    const LadderResult ladder = run_anchor_validation(ds, cfg.model.anchors, invariance_options(cfg));
    print_ladder(ladder);
    report_written(emit_results(cfg.output, "anchors", envelope("ladder", to_json(ladder)), ladder_table(ladder)));
    return ladder_converged(ladder) ? kOk : kNonConvergence;
}

int cmd_ladder(const Common& c) {
    const RunConfig cfg = resolve(c, true);
    const OrdinalDataset ds = load_config_dataset(cfg);
    ModelSpec spec = model_spec(cfg, ds);
    const LadderResult ladder = run_invariance_ladder(ds, spec, invariance_options(cfg));
    print_ladder(ladder);
    report_written(emit_results(cfg.output, "ladder", envelope("ladder", to_json(ladder)), ladder_table(ladder)));
    return ladder_converged(ladder) ? kOk : kNonConvergence;
}

FitResult fit_configured(const RunConfig& cfg, const OrdinalDataset& ds) {
    const ModelSpec spec = model_spec(cfg, ds);
    FitResult f = fit(ds, spec);
    std::printf("%s: loglik %.6f, %zu free parameters, %d iterations, %s\n", to_string(spec.constraint_level).c_str(),
                f.loglik, f.n_free, f.iterations, f.converged ? "converged" : ("not converged: " + f.message).c_str());
    return f;
}

int cmd_fit(const Common& c, const std::string& level) {
    RunConfig cfg = resolve(c, true);
    if (!level.empty()) cfg.model.level = parse_constraint_level(level);
    const OrdinalDataset ds = load_config_dataset(cfg);
    const FitResult f = fit_configured(cfg, ds);
    report_written(emit_results(cfg.output, "fit", envelope("fit", to_json(f)), parameter_table(f)));
    return f.converged ? kOk : kNonConvergence;
}

int cmd_dif(const Common& c, const std::string& level) {
    RunConfig cfg = resolve(c, true);
    if (!level.empty()) cfg.model.level = parse_constraint_level(level);
    const OrdinalDataset ds = load_config_dataset(cfg);
    const FitResult f = fit_configured(cfg, ds);
    if (!f.converged) throw ConvergenceError("model did not converge: " + f.message);
    const ThresholdDiffTable table = threshold_differences(f);
    std::printf("%-16s %3s %10s %10s %10s %8s\n", "item", "k", "reference", "focal", "diff", "se");
    for (const auto& r : table.rows) {
        std::printf("%-16s %3d %10.3f %10.3f %10.3f %8s\n", r.item.c_str(), r.threshold, r.tau_reference, r.tau_focal,
                    r.delta, fixed(r.se, 3).c_str());
    }
    report_written(emit_results(cfg.output, "dif", envelope("threshold_differences", to_json(table)),
                                threshold_table(table)));
    return kOk;
}

int cmd_gap(const Common& c) {
    const RunConfig cfg = resolve(c, true);
    const OrdinalDataset ds = load_config_dataset(cfg);
    const FitResult f = fit_configured(cfg, ds);
    if (!f.converged) throw ConvergenceError("model did not converge: " + f.message);
    const LatentGap gap = latent_gap(f);
    const std::vector<EapScore> scores = eap_scores(f, ds);
    std::printf("latent gap (%s - %s): %.3f (se %s)\n", gap.focal_group.c_str(), gap.reference_group.c_str(),
                gap.estimate, fixed(gap.se, 3).c_str());
    report_written(emit_results(cfg.output, "gap", envelope("latent_gap", to_json(gap, scores)), gap_table(gap),
                                {{"eap_scores.csv", eap_table(ds, scores)}}));
    return kOk;
}

int cmd_policy(const Common& c, const std::string& mode, std::optional<bool> standardize) {
    RunConfig cfg = resolve(c, true);
    if (!mode.empty()) cfg.structural.mode = parse_structural_mode(mode);
    if (standardize) cfg.structural.standardize_outcome = *standardize;
    const OrdinalDataset ds = load_config_dataset(cfg);
    StructuralOptions o;
    o.mode = cfg.structural.mode;
    o.standardize_outcome = cfg.structural.standardize_outcome;
    o.min_rows_per_group = cfg.structural.min_rows_per_group;
    const PolicyEffect e = structural_effect(ds, model_spec(cfg, ds), o);
    for (const auto& w : e.warnings) std::cerr << "warning: " << w << "\n";
    std::printf("%s (%s%s): beta %.3f (se %s), latent gap %.3f (se %s), policy difference %.3f (se %s)%s\n",
                e.outcome.c_str(), to_string(e.mode).c_str(), e.outcome_standardized ? ", standardized outcome" : "",
                e.beta_used, fixed(e.beta_used_se, 3).c_str(), e.latent_gap, fixed(e.latent_gap_se, 3).c_str(),
                e.delta_policy, fixed(e.delta_policy_se, 3).c_str(),
                e.independence_assumed ? " [se assumes independent beta and gap]" : "");
    report_written(emit_results(cfg.output, "policy", envelope("policy_effect", to_json(e)), policy_table(e)));
    return kOk;
}

int cmd_simulate(const Common& c) {
    RunConfig cfg = resolve(c, false);
    GridAxes axes = cfg.simulation.value_or(GridAxes{});
    if (!cfg.seed) throw InputError("simulate needs a seed (--seed, seed, or simulation.base_seed)");
    axes.base_seed = *cfg.seed;
    const std::vector<SimCondition> conditions = expand_grid(axes);
    const SimulationReport report = run_grid(conditions, cfg.threads);
    std::printf("%6s %6s %6s %3s %-15s %8s %8s %8s %6s\n", "delta", "lambda", "resid", "k", "estimator", "mean", "bias",
                "sd", "conv");
    for (const auto& cell : report.cells) {
        const SimCondition& cond = report.conditions[static_cast<std::size_t>(cell.condition)];
        std::printf("%6.2f %6.2f %6.2f %3d %-15s %8.3f %8.3f %8.3f %6.2f\n", cond.delta, cond.lambda, cond.resid_var,
                    cond.n_categories, to_string(cell.estimator).c_str(), cell.mean, cell.bias, cell.sd,
                    cell.conv_rate);
    }
    for (int f : report.flagged_conditions) {
        std::cerr << "warning: condition " << f << " converged in fewer than half of its replications\n";
    }
    std::cerr << report.scale_metric_note << "\n";
    report_written(emit_results(cfg.output, "simulation", envelope("simulation", to_json(report)),
                                simulation_table(report),
                                {{"simulation_records.csv", simulation_records_table(report)}}));
    return kOk;
}

int cmd_demo(const Common& c, int n) {
    const fs::path dir = c.out.empty() ? fs::path("data") : fs::path(c.out);
    const std::uint64_t seed = c.seed.value_or(7);
    const OrdinalDataset ds = make_demo_dataset(seed, n);
    write_atomic(dir / "demo.csv", dataset_to_csv(ds, "race"));

    RunConfig cfg;
    DataConfig data;
    data.path = "demo.csv";
    data.schema.group_column = "race";
    for (const auto& item : ds.items) {
        data.schema.items.push_back(item.name);
        data.schema.categories[item.name] = item.n_categories;
    }
    data.schema.outcome = ds.outcome_name;
    data.schema.covariates = ds.covariate_names;
    data.schema.groups = ds.groups;
    cfg.data = data;
    cfg.model.anchors = {"anchor1", "anchor2", "anchor3", "anchor4"};
    cfg.model.reference_group = ds.groups.front();
    cfg.output.dir = "out";
    cfg.seed = seed;
    write_atomic(dir / "demo_config.json", dump_json(config_to_json(cfg)));
    std::cerr << "wrote " << (dir / "demo.csv").string() << " and " << (dir / "demo_config.json").string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ordinal multi-group measurement invariance, DIF and latent-gap analysis"};
    app.require_subcommand(1);
    Common common;
    std::string level, mode;
    std::vector<std::string> anchors;
    std::optional<bool> standardize;
    int demo_rows = 2000;

    auto* validate = app.add_subcommand("validate", "Check a dataset against its configuration");
    auto* anchors_cmd = app.add_subcommand("anchors", "Invariance ladder on the anchor items only");
    auto* ladder = app.add_subcommand("ladder", "Configural, metric, scalar and scalar_fv ladder over all items");
    auto* fit_cmd = app.add_subcommand("fit", "Fit one model and report parameters with standard errors");
    auto* dif = app.add_subcommand("dif", "Threshold differences between groups");
    auto* gap = app.add_subcommand("gap", "Latent mean gap and EAP factor scores");
    auto* policy = app.add_subcommand("policy", "Outcome regression on the latent trait and implied group difference");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo comparison of scale, full scalar and anchor estimators");
    auto* demo = app.add_subcommand("demo", "Write the synthetic demo dataset and its configuration");
    for (auto* sub : {validate, anchors_cmd, ladder, fit_cmd, dif, gap, policy, simulate, demo}) add_common(sub, common);
    anchors_cmd->add_option("--anchors", anchors, "Anchor items (overrides model.anchors)")->delimiter(',');
    fit_cmd->add_option("--level", level, "configural, metric, scalar, scalar_fv or partial_scalar_anchor");
    dif->add_option("--level", level, "Constraint level for the fitted model");
    policy->add_option("--mode", mode, "joint or two_step");
    policy->add_flag("--standardize-outcome,!--raw-outcome", standardize, "z-score the outcome (default from config)");
    demo->add_option("--rows", demo_rows, "Number of respondents")->check(CLI::Range(4, 10000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*validate) return cmd_validate(common);
        if (*anchors_cmd) return cmd_anchors(common, anchors);
        if (*ladder) return cmd_ladder(common);
        if (*fit_cmd) return cmd_fit(common, level);
        if (*dif) return cmd_dif(common, level);
        if (*gap) return cmd_gap(common);
        if (*policy) return cmd_policy(common, mode, standardize);
        if (*simulate) return cmd_simulate(common);
        if (*demo) return cmd_demo(common, demo_rows);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& i : e.issues()) {
            std::cerr << "  " << (i.row >= 0 ? "row " + std::to_string(i.row + 1) + ": " : "")
                      << (i.item.empty() ? "" : "item " + i.item + ": ") << i.reason << "\n";
        }
        return kValidation;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

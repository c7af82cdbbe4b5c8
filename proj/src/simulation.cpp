#include "ordinv/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <tuple>

#include "ordinv/estimator.hpp"
#include "ordinv/parallel.hpp"

namespace ordinv {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t stream_key(std::uint64_t base_seed, std::uint64_t condition_hash, int rep_index) {
    return mix64(base_seed ^ mix64(condition_hash ^ mix64(static_cast<std::uint64_t>(rep_index) + kGolden)));
}

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

CounterRng::result_type CounterRng::operator()() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

std::string to_string(ScaleItems s) { return s == ScaleItems::dif_only_4 ? "dif_only_4" : "all_8"; }

ScaleItems parse_scale_items(const std::string& text) {
    if (text == "dif_only_4") return ScaleItems::dif_only_4;
    if (text == "all_8") return ScaleItems::all_8;
    throw std::invalid_argument("unknown scale_items '" + text + "'");
}

std::string to_string(ScaleMetric m) { return m == ScaleMetric::pooled_sd ? "pooled_sd" : "reliability_corrected"; }

ScaleMetric parse_scale_metric(const std::string& text) {
    if (text == "pooled_sd") return ScaleMetric::pooled_sd;
    if (text == "reliability_corrected") return ScaleMetric::reliability_corrected;
    throw std::invalid_argument("unknown scale_metric '" + text + "'");
}

double SimCondition::loading(int item) const {
    return loadings.empty() ? lambda : loadings.at(static_cast<std::size_t>(item));
}

void SimCondition::check() const {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be >= 0");
    if (!(resid_var > 0.0)) throw std::invalid_argument("resid_var must be > 0");
    if (n_categories < 2) throw std::invalid_argument("n_categories must be >= 2");
    if (n < 4 || n % 2 != 0) throw std::invalid_argument("n must be even and >= 4");
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (!loadings.empty() && loadings.size() != static_cast<std::size_t>(kSimItems)) {
        throw std::invalid_argument("loadings override needs 8 entries");
    }
    if (!(outcome_sd > 0.0)) throw std::invalid_argument("outcome_sd must be > 0");
}

std::uint64_t SimCondition::hash() const {
    std::string key = "delta=" + fmt_double(delta) + ";resid_var=" + fmt_double(resid_var) +
                      ";k=" + std::to_string(n_categories) + ";n=" + std::to_string(n) +
                      ";gap=" + fmt_double(true_gap) + ";loadings=";
    for (int j = 0; j < kSimItems; ++j) key += fmt_double(loading(j)) + ",";
    if (outcome_slope) key += ";outcome=" + fmt_double(*outcome_slope) + "/" + fmt_double(outcome_sd);
    return fnv1a(key);
}

std::vector<std::string> sim_dif_items() { return {"dif1", "dif2", "dif3", "dif4"}; }
std::vector<std::string> sim_anchor_items() { return {"anchor1", "anchor2", "anchor3", "anchor4"}; }

std::vector<std::string> sim_item_names() {
    auto names = sim_dif_items();
    for (auto& a : sim_anchor_items()) names.push_back(a);
    return names;
}

std::vector<std::string> scale_item_names(ScaleItems s) {
    return s == ScaleItems::dif_only_4 ? sim_dif_items() : sim_item_names();
}

std::vector<double> category_cuts(int n_categories) {
    if (n_categories < 2) throw std::invalid_argument("need at least 2 categories");
    if (n_categories == 4) return {-1.0, 0.0, 1.0};
    if (n_categories == 2) return {0.0};
    std::vector<double> cuts;
    const int m = n_categories - 1;
    for (int k = 0; k < m; ++k) cuts.push_back(-1.5 + 3.0 * k / (m - 1));
    return cuts;
}

int discretize(double y, const std::vector<double>& cuts) {
    int k = 1;
    for (double c : cuts) {
        if (y <= c) return k;
        ++k;
    }
    return k;
}

LatentDraw generate_latent(const SimCondition& cond, int rep_index) {
    cond.check();
    CounterRng rng(stream_key(cond.base_seed, cond.hash(), rep_index));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double resid_sd = std::sqrt(cond.resid_var);
    LatentDraw out;
    const auto n = static_cast<std::size_t>(cond.n);
    out.group.resize(n);
    out.eta.resize(n);
    out.continuous.resize(n * kSimItems);
    if (cond.outcome_slope) out.outcome.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int g = i < n / 2 ? 0 : 1;
        out.group[i] = g;
        const double eta = cond.true_gap * g + normal(rng);
        out.eta[i] = eta;
        for (int j = 0; j < kSimItems; ++j) {
            double y = cond.loading(j) * eta + resid_sd * normal(rng);
            if (j < kSimDifItems) y += cond.delta * g;
            out.continuous[i * kSimItems + static_cast<std::size_t>(j)] = y;
        }
        if (cond.outcome_slope) out.outcome[i] = *cond.outcome_slope * eta + cond.outcome_sd * normal(rng);
    }
    return out;
}

OrdinalDataset generate_replication(const SimCondition& cond, int rep_index) {
    const LatentDraw draw = generate_latent(cond, rep_index);
    const auto cuts = category_cuts(cond.n_categories);
    OrdinalDataset d;
    d.groups = {"reference", "focal"};
    for (const auto& name : sim_dif_items()) d.items.push_back({name, cond.n_categories, ItemRole::child_rearing});
    for (const auto& name : sim_anchor_items()) d.items.push_back({name, cond.n_categories, ItemRole::anchor});
    if (cond.outcome_slope) d.outcome_name = "outcome";
    d.rows.reserve(draw.group.size());
    for (std::size_t i = 0; i < draw.group.size(); ++i) {
        Respondent r;
        r.group_index = draw.group[i];
        r.responses.reserve(kSimItems);
        for (int j = 0; j < kSimItems; ++j) {
            r.responses.push_back(static_cast<Response>(discretize(draw.continuous[i * kSimItems + static_cast<std::size_t>(j)], cuts)));
        }
        if (cond.outcome_slope) r.outcome = draw.outcome[i];
        d.rows.push_back(std::move(r));
    }
    return d;
}

namespace {

std::vector<int> item_indices(const OrdinalDataset& dataset, const std::vector<std::string>& names) {
    std::vector<int> idx;
    for (const auto& name : names) {
        const int j = dataset.item_index(name);
        if (j < 0) throw std::invalid_argument("scale item '" + name + "' not in dataset");
        idx.push_back(j);
    }
    return idx;
}

}  // namespace

double cronbach_alpha(const OrdinalDataset& dataset, const std::vector<std::string>& items) {
    const std::vector<int> idx = item_indices(dataset, items);
    const std::size_t m = idx.size();
    if (m < 2) throw std::invalid_argument("alpha needs at least two items");
    const std::size_t n_groups = dataset.n_groups();
    std::vector<std::vector<double>> mean(n_groups, std::vector<double>(m, 0.0));
    std::vector<double> count(n_groups, 0.0);
    auto complete = [&](const Respondent& row) {
        for (int j : idx) {
            if (row.responses[static_cast<std::size_t>(j)] == kMissing) return false;
        }
        return true;
    };
    for (const auto& row : dataset.rows) {
        if (!complete(row)) continue;
        const auto g = static_cast<std::size_t>(row.group_index);
        for (std::size_t a = 0; a < m; ++a) mean[g][a] += row.responses[static_cast<std::size_t>(idx[a])];
        count[g] += 1.0;
    }
    double n_used = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (count[g] == 0.0) continue;
        for (auto& v : mean[g]) v /= count[g];
        n_used += count[g];
    }
    if (n_used <= static_cast<double>(n_groups) + 1.0) throw std::domain_error("too few complete cases for alpha");
    std::vector<double> cov(m * m, 0.0);
    std::vector<double> dev(m);
    for (const auto& row : dataset.rows) {
        if (!complete(row)) continue;
        const auto g = static_cast<std::size_t>(row.group_index);
        for (std::size_t a = 0; a < m; ++a) dev[a] = row.responses[static_cast<std::size_t>(idx[a])] - mean[g][a];
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) cov[a * m + b] += dev[a] * dev[b];
        }
    }
    double total = 0.0, diag = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        diag += cov[a * m + a];
        for (std::size_t b = 0; b < m; ++b) total += cov[a * m + b];
    }
    if (!(total > 0.0)) throw std::domain_error("scale scores have zero variance");
    const double md = static_cast<double>(m);
    return md / (md - 1.0) * (1.0 - diag / total);
}

double estimate_scale(const OrdinalDataset& dataset, const SimCondition& cond) {
    const auto names = scale_item_names(cond.scale_items);
    const std::vector<int> idx = item_indices(dataset, names);
    double sum[2] = {0.0, 0.0}, sum2[2] = {0.0, 0.0}, count[2] = {0.0, 0.0};
    for (const auto& row : dataset.rows) {
        if (row.group_index < 0 || row.group_index > 1) throw std::invalid_argument("scale estimate needs two groups");
        double s = 0.0;
        int m = 0;
        for (int j : idx) {
            const Response y = row.responses[static_cast<std::size_t>(j)];
            if (y == kMissing) continue;
            s += y;
            ++m;
        }
        if (m == 0) continue;
        const double score = s / m;
        const auto g = static_cast<std::size_t>(row.group_index);
        sum[g] += score;
        sum2[g] += score * score;
        count[g] += 1.0;
    }
    if (count[0] < 2 || count[1] < 2) throw std::invalid_argument("scale estimate needs two respondents per group");
    const double m0 = sum[0] / count[0], m1 = sum[1] / count[1];
    const double ss0 = sum2[0] - count[0] * m0 * m0;
    const double ss1 = sum2[1] - count[1] * m1 * m1;
    const double pooled = std::sqrt(std::max(0.0, (ss0 + ss1) / (count[0] + count[1] - 2.0)));
    if (!(pooled > 1e-12)) throw std::domain_error("scale scores have zero pooled standard deviation");
    double d = (m1 - m0) / pooled;
    if (cond.scale_metric == ScaleMetric::reliability_corrected) {
        const double alpha = cronbach_alpha(dataset, names);
        if (!(alpha > 0.0)) throw std::domain_error("scale reliability is not positive");
        d /= std::sqrt(alpha);
    }
    return d;
}

namespace {

std::optional<double> focal_mean(const OrdinalDataset& dataset, const ModelSpec& spec) {
    FitOptions opt;
    opt.compute_standard_errors = false;
    const FitResult f = fit(dataset, spec, opt);
    if (!f.converged) return std::nullopt;
    const int focal = f.params.reference_group == 0 ? 1 : 0;
    return f.params.groups[static_cast<std::size_t>(focal)].latent_mean;
}

}  // namespace

std::optional<double> estimate_full_scalar(const OrdinalDataset& dataset, const SimCondition& cond) {
    ModelSpec spec;
    spec.item_names = scale_item_names(cond.full_scalar_items);
    spec.constraint_level = ConstraintLevel::scalar;
    return focal_mean(dataset, spec);
}

std::optional<double> estimate_partial_anchor(const OrdinalDataset& dataset, const std::vector<std::string>& anchors) {
    ModelSpec spec;
    spec.item_names = sim_item_names();
    spec.anchor_set = anchors;
    spec.constraint_level = ConstraintLevel::partial_scalar_anchor;
    return focal_mean(dataset, spec);
}

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::scale: return "scale";
        case Estimator::full_scalar: return "full_scalar";
        case Estimator::partial_anchor: return "partial_anchor";
    }
    return "unknown";
}

Estimator parse_estimator(const std::string& text) {
    for (auto e : kAllEstimators) {
        if (to_string(e) == text) return e;
    }
    throw std::invalid_argument("unknown estimator '" + text + "'");
}

SimulationReport summarize(const std::vector<SimCondition>& conditions, std::vector<ReplicationRecord> records) {
    auto order = [](const ReplicationRecord& r) {
        return std::tuple(r.condition, static_cast<int>(r.estimator), r.replication);
    };
    std::sort(records.begin(), records.end(), [&](const auto& a, const auto& b) { return order(a) < order(b); });

    SimulationReport report;
    report.conditions = conditions;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
        bool flag = false;
        for (auto e : kAllEstimators) {
            CellSummary cell;
            cell.condition = static_cast<int>(c);
            cell.estimator = e;
            std::vector<double> values;
            for (const auto& r : records) {
                if (r.condition != cell.condition || r.estimator != e) continue;
                ++cell.replications;
                if (r.converged) values.push_back(r.estimate);
            }
            cell.n_converged = static_cast<int>(values.size());
            cell.conv_rate = cell.replications ? static_cast<double>(cell.n_converged) / cell.replications : 0.0;
            if (!values.empty()) {
                double s = 0.0;
                for (double v : values) s += v;
                cell.mean = s / static_cast<double>(values.size());
                double ss = 0.0;
                for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
                cell.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
            } else {
                cell.mean = std::nan("");
                cell.sd = std::nan("");
            }
            cell.bias = cell.mean - conditions[c].true_gap;
            if (cell.conv_rate < 0.5) flag = true;
            report.cells.push_back(cell);
        }
        if (flag) report.flagged_conditions.push_back(static_cast<int>(c));
    }
    report.records = std::move(records);
    for (const auto& c : conditions) {
        const std::string note = "scale estimate standardized by " + to_string(c.scale_metric);
        if (report.scale_metric_note.empty()) {
            report.scale_metric_note = note;
        } else if (report.scale_metric_note != note) {
            report.scale_metric_note = "scale estimate standardization varies by condition";
        }
    }
    return report;
}

SimulationReport run_grid(const std::vector<SimCondition>& conditions, int threads) {
    struct Job {
        int condition;
        int replication;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
        conditions[c].check();
        for (int r = 0; r < conditions[c].replications; ++r) jobs.push_back({static_cast<int>(c), r});
    }
    constexpr std::size_t n_est = std::size(kAllEstimators);
    std::vector<ReplicationRecord> records(jobs.size() * n_est);
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const Job job = jobs[i];
        const SimCondition& cond = conditions[static_cast<std::size_t>(job.condition)];
        const OrdinalDataset data = generate_replication(cond, job.replication);
        for (std::size_t e = 0; e < n_est; ++e) {
            ReplicationRecord rec;
            rec.condition = job.condition;
            rec.replication = job.replication;
            rec.estimator = kAllEstimators[e];
            std::optional<double> est;
            switch (rec.estimator) {
                case Estimator::scale:
                    try {
                        est = estimate_scale(data, cond);
                    } catch (const std::domain_error&) {
                        est.reset();
                    }
                    break;
                case Estimator::full_scalar: est = estimate_full_scalar(data, cond); break;
                case Estimator::partial_anchor: est = estimate_partial_anchor(data); break;
            }
            rec.converged = est.has_value();
            rec.estimate = est.value_or(std::nan(""));
            records[i * n_est + e] = rec;
        }
    });
    return summarize(conditions, std::move(records));
}

std::vector<SimCondition> expand_grid(const GridAxes& axes) {
    if (!axes.loadings.empty() && axes.lambdas.size() != 1) {
        throw std::invalid_argument("per-item loadings need exactly one lambda level");
    }
    std::vector<SimCondition> out;
    for (double lambda : axes.lambdas) {
        for (double resid : axes.resid_vars) {
            for (int k : axes.categories) {
                for (double delta : axes.deltas) {
                    SimCondition c;
                    c.delta = delta;
                    c.lambda = lambda;
                    c.resid_var = resid;
                    c.n_categories = k;
                    c.n = axes.n;
                    c.replications = axes.replications;
                    c.true_gap = axes.true_gap;
                    c.scale_items = axes.scale_items;
                    c.full_scalar_items = axes.full_scalar_items;
                    c.scale_metric = axes.scale_metric;
                    c.loadings = axes.loadings;
                    c.base_seed = axes.base_seed;
                    out.push_back(c);
                }
            }
        }
    }
    return out;
}

OrdinalDataset make_demo_dataset(std::uint64_t seed, int n) {
    SimCondition cond;
    cond.delta = 0.3;
    cond.lambda = 0.9;
    cond.n = n;
    cond.base_seed = seed;
    cond.outcome_slope = 0.5;
    const LatentDraw draw = generate_latent(cond, 0);

    OrdinalDataset d;
    d.groups = {"White", "Black"};
    for (int j = 1; j <= 4; ++j) d.items.push_back({"auth_" + std::to_string(j), 2, ItemRole::child_rearing});
    for (int j = 1; j <= 4; ++j) d.items.push_back({"anchor" + std::to_string(j), 4, ItemRole::anchor});
    d.outcome_name = "policy";
    d.covariate_names = {"party_id", "female"};

    CounterRng rng(mix64(seed ^ 0xd1b54a32d192ed03ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto binary = category_cuts(2);
    const auto four = category_cuts(4);
    for (std::size_t i = 0; i < draw.group.size(); ++i) {
        Respondent r;
        r.group_index = draw.group[i];
        for (int j = 0; j < kSimItems; ++j) {
            const double y = draw.continuous[i * kSimItems + static_cast<std::size_t>(j)];
            Response code = static_cast<Response>(discretize(y, j < kSimDifItems ? binary : four));
            if (unif(rng) < 0.02) code = kMissing;
            r.responses.push_back(code);
        }
        const double party = normal(rng);
        const double female = unif(rng) < 0.5 ? 1.0 : 0.0;
        r.covariates = {party, female};
        r.outcome = draw.outcome[i] + 0.3 * party - 0.2 * female;
        d.rows.push_back(std::move(r));
    }
    return d;
}

}  // namespace ordinv

#include "ordinv/analysis.hpp"

#include <cmath>

#include "doctest.h"
#include "ordinv/invariance.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ordinv;

namespace {

// Two binary items in two groups with the given thresholds.
ParameterSet two_item_params(double ref1, double ref2, double foc1, double foc2) {
    ParameterSet p;
    p.latent_intercepts = {0.0, 0.0};
    for (int g = 0; g < 2; ++g) {
        GroupParameters gp;
        gp.loadings = {0.8, 0.8};
        gp.residual_variances = {1.0, 1.0};
        gp.thresholds = g == 0 ? std::vector<std::vector<double>>{{ref1}, {ref2}}
                               : std::vector<std::vector<double>>{{foc1}, {foc2}};
        p.groups.push_back(gp);
    }
    return p;
}

const std::vector<ItemDescriptor> kAuthItems{{"auth_1", 2, ItemRole::child_rearing},
                                              {"auth_2", 2, ItemRole::child_rearing}};
const std::vector<std::string> kRaceGroups{"White", "Black"};

FitResult partial_fit(const OrdinalDataset& ds) {
    return fit(ds, fixture::spec_for(ds, ConstraintLevel::partial_scalar_anchor, sim_anchor_items()));
}

OrdinalDataset single_item(int k, int n_rows) {
    OrdinalDataset ds;
    ds.items = {{"y", k}};
    ds.groups = {"A"};
    for (int i = 0; i < n_rows; ++i) {
        Respondent r;
        r.responses = {static_cast<Response>(1 + i % k)};
        ds.rows.push_back(r);
    }
    return ds;
}

}  // namespace

TEST_CASE("equal thresholds give zero differences") {
    const auto p = two_item_params(-0.3, 0.4, -0.3, 0.4);
    const auto t = threshold_differences(p, kAuthItems, kRaceGroups, 0, 1);
    REQUIRE(t.rows.size() == 2);
    for (const auto& r : t.rows) CHECK(r.delta == 0.0);
    CHECK(t.reference_group == "White");
    CHECK(t.focal_group == "Black");
}

TEST_CASE("threshold differences of published estimates") {
    // 2008 ANES: auth_1 -0.879 / -1.325, auth_2 -0.554 / -1.294 (reference / focal).
    const auto anes = threshold_differences(two_item_params(-0.879, -0.554, -1.325, -1.294), kAuthItems,
                                            kRaceGroups, 0, 1);
    CHECK(anes.rows[0].item == "auth_1");
    CHECK(anes.rows[0].threshold == 1);
    CHECK(anes.rows[0].delta == doctest::Approx(-0.446).epsilon(1e-12));
    CHECK(anes.rows[1].delta == doctest::Approx(-0.740).epsilon(1e-12));
    // 2016 NSCP: auth_1 -0.432 / -0.730.
    const auto nscp = threshold_differences(two_item_params(-0.432, 0.0, -0.730, 0.0), kAuthItems, kRaceGroups, 0, 1);
    CHECK(nscp.rows[0].delta == doctest::Approx(-0.298).epsilon(1e-12));
}

TEST_CASE("swapping the focal group negates every difference") {
    const auto ds = fixture::sim_dataset(0.5, 800, 31);
    const auto f = partial_fit(ds);
    REQUIRE(f.converged);
    const auto forward = threshold_differences(f.params, f.items, f.group_labels, 0, 1);
    const auto backward = threshold_differences(f.params, f.items, f.group_labels, 1, 0);
    REQUIRE(forward.rows.size() == backward.rows.size());
    for (std::size_t i = 0; i < forward.rows.size(); ++i) {
        CHECK(forward.rows[i].delta == -backward.rows[i].delta);
        CHECK(forward.rows[i].delta == forward.rows[i].tau_focal - forward.rows[i].tau_reference);
    }
}

TEST_CASE("threshold difference SEs use the joint covariance") {
    const auto ds = fixture::sim_dataset(0.5, 1000, 32);
    const auto f = partial_fit(ds);
    REQUIRE(f.converged);
    const auto t = threshold_differences(f);
    CHECK(t.rows.size() == 4 * 3 + 4 * 3);
    std::size_t r = 0;
    for (int j = 0; j < 8; ++j) {
        for (int k = 0; k < 3; ++k, ++r) {
            const auto& row = t.rows[r];
            REQUIRE(row.se.has_value());
            if (j >= 4) {
                // Anchor thresholds are tied, so the difference is exactly 0.
                CHECK(row.role == ItemRole::anchor);
                CHECK(row.delta == 0.0);
                CHECK(*row.se == 0.0);
                continue;
            }
            const int a = f.free_index({ParamKind::threshold, 1, j, k});
            const int b = f.free_index({ParamKind::threshold, 0, j, k});
            const double v = f.covariance(a, a) + f.covariance(b, b) - 2 * f.covariance(a, b);
            CHECK(*row.se == doctest::Approx(std::sqrt(v)).epsilon(1e-12));
        }
    }
    // DIF of 0.5 on the continuous response shifts every free threshold down.
    for (int k = 0; k < 3; ++k) CHECK(t.rows[static_cast<std::size_t>(k)].delta < 0.0);
}

TEST_CASE("threshold differences need two groups") {
    const auto ds = single_item(3, 30);
    const auto f = fit(ds, fixture::spec_for(ds, ConstraintLevel::configural));
    CHECK_THROWS_AS(threshold_differences(f), std::invalid_argument);
}

TEST_CASE("latent gap requires a free focal mean") {
    const auto ds = fixture::sim_dataset(0.0, 600, 33);
    FitOptions o;
    o.compute_standard_errors = false;
    for (auto level : {ConstraintLevel::configural, ConstraintLevel::metric, ConstraintLevel::scalar_fv}) {
        const auto f = fit(ds, fixture::spec_for(ds, level), o);
        CHECK_THROWS_WITH_AS(latent_gap(f), "latent mean not identified at this level", std::invalid_argument);
    }
    const auto f = partial_fit(ds);
    const auto gap = latent_gap(f);
    CHECK(gap.estimate == f.params.groups[1].latent_mean);
    REQUIRE(gap.se.has_value());
    CHECK(*gap.se == *f.standard_error({ParamKind::latent_mean, 1, -1, -1}));
    CHECK(gap.focal_group == "focal");
}

TEST_CASE("EAP of an all-missing respondent is the prior") {
    auto ds = fixture::sim_dataset(0.0, 200, 34);
    const auto f = partial_fit(ds);
    REQUIRE(f.converged);
    auto& row = ds.rows[1];
    std::fill(row.responses.begin(), row.responses.end(), kMissing);
    const auto scores = eap_scores(f, ds);
    const auto& g = f.params.groups[static_cast<std::size_t>(row.group_index)];
    CHECK(scores[1].score == g.latent_mean);
    CHECK(scores[1].sd == doctest::Approx(std::sqrt(g.latent_variance)).epsilon(1e-15));
}

TEST_CASE("EAP with uninformative items is the group mean") {
    const auto ds = fixture::small_dataset(3, 2, 3);
    ParameterSet p;
    p.latent_intercepts.assign(3, 0.0);
    for (int g = 0; g < 2; ++g) {
        GroupParameters gp;
        gp.loadings.assign(3, 0.0);
        gp.residual_variances.assign(3, 1.0);
        gp.thresholds.assign(3, {-0.5, 0.5});
        gp.latent_mean = g == 0 ? 0.0 : 0.7;
        gp.latent_variance = g == 0 ? 1.0 : 1.5;
        p.groups.push_back(gp);
    }
    const auto scores = eap_scores(p, ds, gauss_hermite(31));
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& gp = p.groups[static_cast<std::size_t>(ds.rows[i].group_index)];
        CHECK(scores[i].score == doctest::Approx(gp.latent_mean).epsilon(1e-14).scale(1.0));
        CHECK(scores[i].sd == doctest::Approx(std::sqrt(gp.latent_variance)).epsilon(1e-12));
    }
}

TEST_CASE("EAP agrees with grid posterior integration on the toy suite") {
    // The posterior SD is a second moment and needs more nodes than the mean
    // for the sharpest four-item cases, so it is compared at 61 points.
    const auto rule = gauss_hermite(31), fine = gauss_hermite(61);
    for (const auto& t : oracle::toy_suite()) {
        OrdinalDataset ds;
        ds.groups = {"A"};
        for (std::size_t j = 0; j < t.n_categories.size(); ++j) {
            ds.items.push_back({"i" + std::to_string(j), t.n_categories[j]});
        }
        Respondent r;
        r.responses = t.responses;
        ds.rows.push_back(r);
        ParameterSet p;
        p.groups = {t.group};
        p.latent_intercepts.assign(t.n_categories.size(), 0.0);
        const auto ref = oracle::grid_integrate(t.responses, t.group);
        CHECK(std::abs(eap_scores(p, ds, rule)[0].score - ref.mean) < 1e-5);
        const auto s = eap_scores(p, ds, fine);
        CHECK(std::abs(s[0].score - ref.mean) < 1e-5);
        CHECK(std::abs(s[0].sd - ref.sd) < 1e-5);
    }
}

TEST_CASE("EAP is non-decreasing in the category of a positively loaded item") {
    for (double loading : {0.3, 1.0, 2.5}) {
        const auto ds = single_item(5, 5);
        ParameterSet p;
        p.latent_intercepts = {0.0};
        GroupParameters gp;
        gp.loadings = {loading};
        gp.residual_variances = {1.0};
        gp.thresholds = {{-1.2, -0.3, 0.1, 1.4}};
        p.groups = {gp};
        const auto s = eap_scores(p, ds, gauss_hermite(31));
        for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].score >= s[i - 1].score);
        for (const auto& e : s) CHECK(e.sd <= 1.0);
    }
}

TEST_CASE("posterior SD never exceeds the prior SD") {
    const auto ds = fixture::sim_dataset(0.3, 400, 35);
    const auto f = partial_fit(ds);
    const auto s = eap_scores(f, ds);
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& g = f.params.groups[static_cast<std::size_t>(ds.rows[i].group_index)];
        CHECK(s[i].sd <= std::sqrt(g.latent_variance) + 1e-12);
    }
}

TEST_CASE("policy difference: zero slope, delta method, independence flag") {
    PolicyEffect e;
    e.beta_used = 0.0;
    e.latent_gap = 0.37;
    set_policy_difference(e, std::nullopt);
    CHECK(e.delta_policy == 0.0);
    CHECK(e.independence_assumed);

    // var = g^2 sb^2 + b^2 sg^2 + 2 b g cov = 0.0004 + 0.000625 + 0.0002.
    e.beta_used = 0.5;
    e.beta_used_se = 0.1;
    e.latent_gap = 0.2;
    e.latent_gap_se = 0.05;
    set_policy_difference(e, 0.001);
    CHECK(e.delta_policy == 0.5 * 0.2);
    CHECK_FALSE(e.independence_assumed);
    REQUIRE(e.delta_policy_se.has_value());
    CHECK(*e.delta_policy_se == doctest::Approx(0.035).epsilon(1e-12));
}

TEST_CASE("least squares matches the closed-form simple regression") {
    Eigen::MatrixXd x(6, 2);
    Eigen::VectorXd y(6);
    const double xs[] = {1, 2, 3, 4, 5, 6}, ys[] = {1.1, 1.9, 3.2, 3.8, 5.3, 5.9};
    double mx = 0, my = 0;
    for (int i = 0; i < 6; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = xs[i];
        y(i) = ys[i];
        mx += xs[i] / 6;
        my += ys[i] / 6;
    }
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 6; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const auto r = ols(x, y, {"const", "x"});
    CHECK(r.coef(1) == doctest::Approx(sxy / sxx).epsilon(1e-12));
    CHECK(r.coef(0) == doctest::Approx(my - r.coef(1) * mx).epsilon(1e-12));
    const double s2 = (y - x * r.coef).squaredNorm() / 4;
    CHECK(r.se(1) == doctest::Approx(std::sqrt(s2 / sxx)).epsilon(1e-10));
}

TEST_CASE("collinear regressors are named") {
    Eigen::MatrixXd x(5, 3);
    x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, 0, 1);
    try {
        ols(x, y, {"const", "a", "twice_a"});
        FAIL("expected CollinearityError");
    } catch (const CollinearityError& e) {
        CHECK(e.columns() == std::vector<std::string>{"a", "twice_a"});
        CHECK(std::string(e.what()).find("twice_a") != std::string::npos);
    }
}

TEST_CASE("structural effect errors") {
    auto ds = fixture::sim_dataset(0.0, 400, 36);
    const auto spec = build_partial_spec(ds, sim_anchor_items());
    CHECK_THROWS_WITH_AS(structural_effect(ds, spec), doctest::Contains("no outcome"), std::invalid_argument);

    auto demo = make_demo_dataset(7, 600);
    for (auto& row : demo.rows) row.covariates.push_back(2.0 * row.covariates[0]);
    demo.covariate_names.push_back("party_twice");
    const auto dspec = build_partial_spec(demo, sim_anchor_items());
    StructuralOptions o;
    o.mode = StructuralMode::two_step;
    CHECK_THROWS_AS(structural_effect(demo, dspec, o), CollinearityError);
}

TEST_CASE("structural effect: two-step and joint on the demo data") {
    const auto ds = make_demo_dataset(7, 2000);
    const auto spec = build_partial_spec(ds, sim_anchor_items());
    StructuralOptions o;
    o.mode = StructuralMode::two_step;
    const auto two = structural_effect(ds, spec, o);
    CHECK(two.independence_assumed);
    CHECK_FALSE(two.pooled);
    CHECK(two.delta_policy == two.beta_used * two.latent_gap);
    CHECK(two.beta_used == two.beta[0]);
    CHECK(two.covariate_effects[0].size() == 2);

    o.mode = StructuralMode::joint;
    const auto joint = structural_effect(ds, spec, o);
    CHECK_FALSE(joint.independence_assumed);
    CHECK(joint.delta_policy == joint.beta_used * joint.latent_gap);
    CHECK(std::abs(joint.beta_used - 0.5) < 0.1);
    CHECK(std::abs(two.beta_used) <= std::abs(joint.beta_used) + 0.02);
    // Covariates in the generating model: +0.3 party, -0.2 female.
    CHECK(std::abs(joint.covariate_effects[0][0] - 0.3) < 0.1);
}

TEST_CASE("few outcome rows in a group fall back to a pooled slope") {
    auto ds = make_demo_dataset(7, 800);
    int kept = 0;
    for (auto& row : ds.rows) {
        if (row.group_index == 1 && kept++ >= 20) row.outcome.reset();
    }
    const auto spec = build_partial_spec(ds, sim_anchor_items());
    StructuralOptions o;
    o.mode = StructuralMode::two_step;
    const auto e = structural_effect(ds, spec, o);
    CHECK(e.pooled);
    REQUIRE(e.warnings.size() == 1);
    CHECK(e.warnings[0].find("pooled slope") != std::string::npos);
    CHECK(e.beta[0] == e.beta[1]);
}

TEST_CASE("standardized outcome scales the slope by the outcome SD") {
    const auto ds = make_demo_dataset(7, 1000);
    const auto spec = build_partial_spec(ds, sim_anchor_items());
    StructuralOptions raw, z;
    raw.mode = z.mode = StructuralMode::two_step;
    z.standardize_outcome = true;
    const auto a = structural_effect(ds, spec, raw);
    const auto b = structural_effect(ds, spec, z);
    CHECK(b.outcome_standardized);
    CHECK(b.beta_used * b.outcome_sd == doctest::Approx(a.beta_used).epsilon(1e-9));
}

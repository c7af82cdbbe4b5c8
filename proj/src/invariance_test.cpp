#include "ordinv/invariance.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support/fixtures.hpp"

using namespace ordinv;

namespace {

ModelSpec all_items(const OrdinalDataset& ds) {
    ModelSpec spec;
    for (const auto& item : ds.items) spec.item_names.push_back(item.name);
    return spec;
}

int threshold_ties_for_item(const ConstraintSet& cs, int item) {
    return static_cast<int>(std::count_if(cs.ties.begin(), cs.ties.end(), [&](const Tie& t) {
        return t.tied.kind == ParamKind::threshold && t.tied.item == item;
    }));
}

}  // namespace

TEST_CASE("invariance needs two groups and two anchors") {
    auto ds = fixture::sim_dataset(0.0, 200, 1);
    auto one = ds;
    one.groups = {"only"};
    for (auto& r : one.rows) r.group_index = 0;
    CHECK_THROWS_WITH(run_anchor_validation(one, sim_anchor_items()), doctest::Contains("invariance requires ≥ 2 groups"));
    CHECK_THROWS_WITH(run_invariance_ladder(one, all_items(one)), doctest::Contains("invariance requires ≥ 2 groups"));
    CHECK_THROWS_AS(run_anchor_validation(ds, {"anchor1"}), std::invalid_argument);
    CHECK_THROWS_AS(run_anchor_validation(ds, {"anchor1", "missing"}), std::invalid_argument);
}

TEST_CASE("anchor ladder rows, df and verdicts") {
    const auto ds = fixture::sim_dataset(0.0, 1000, 2);
    const auto r = run_anchor_validation(ds, sim_anchor_items());
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].level == "configural");
    CHECK(r.rows[1].level == "metric");
    CHECK(r.rows[2].level == "scalar");
    CHECK(r.items == sim_anchor_items());
    CHECK_FALSE(r.rows[0].delta_chisq.has_value());
    // 4 four-category anchors in 2 groups: 2 * (12 + 6) = 36 moments; free 32, 29, 18.
    CHECK(r.rows[0].df_model == 4);
    CHECK(r.rows[1].df_model == 7);
    CHECK(r.rows[2].df_model == 18);
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
        REQUIRE(r.rows[i].delta_df.has_value());
        CHECK(*r.rows[i].delta_df == r.rows[i - 1].n_free - r.rows[i].n_free);
        CHECK(*r.rows[i].delta_df == r.rows[i].df_model - r.rows[i - 1].df_model);
        const bool pass = *r.rows[i].p_value >= r.alpha;
        CHECK(r.rows[i].verdict == (pass ? "pass" : "fail"));
    }
}

TEST_CASE("anchor validation ignores the listed order") {
    const auto ds = fixture::sim_dataset(0.3, 800, 3);
    const auto a = run_anchor_validation(ds, {"anchor1", "anchor2", "anchor3", "anchor4"});
    const auto b = run_anchor_validation(ds, {"anchor4", "anchor2", "anchor1", "anchor3"});
    CHECK(a == b);
}

TEST_CASE("full ladder: four nested rows with non-negative differences") {
    for (std::uint64_t seed : {4u, 5u}) {
        const auto ds = fixture::sim_dataset(0.3, 800, seed);
        const auto r = run_invariance_ladder(ds, all_items(ds));
        REQUIRE(r.rows.size() == 4);
        CHECK(r.rows[3].level == "scalar_fv");
        for (std::size_t i = 1; i < r.rows.size(); ++i) {
            CHECK(r.rows[i].converged);
            CHECK(r.rows[i].df_model >= r.rows[i - 1].df_model);
            REQUIRE(r.rows[i].raw_delta_chisq.has_value());
            CHECK(*r.rows[i].raw_delta_chisq >= -1e-6);
            CHECK(*r.rows[i].delta_chisq >= 0.0);
            CHECK(*r.rows[i].p_value >= 0.0);
            CHECK(*r.rows[i].p_value <= 1.0);
        }
        CHECK(*r.rows[3].delta_df == 1);
    }
}

TEST_CASE("demo data gives configural df 40 and metric df 47") {
    const auto ds = make_demo_dataset(7, 2000);
    const auto r = run_invariance_ladder(ds, all_items(ds));
    REQUIRE(r.rows.size() == 4);
    CHECK(r.rows[0].df_model == 40);
    CHECK(r.rows[1].df_model == 47);
    CHECK(r.rows[2].df_model >= r.rows[1].df_model);
    CHECK(r.rows[3].df_model >= r.rows[2].df_model);
}

TEST_CASE("identical groups pass every step with p > 0.99") {
    auto ds = fixture::sim_dataset(0.0, 1200, 6, 0.0);
    OrdinalDataset twin = ds;
    twin.rows.clear();
    for (const auto& row : ds.rows) {
        if (row.group_index != 0) continue;
        twin.rows.push_back(row);
        auto copy = row;
        copy.group_index = 1;
        twin.rows.push_back(copy);
    }
    const auto ladder = run_invariance_ladder(twin, all_items(twin));
    for (std::size_t i = 1; i < ladder.rows.size(); ++i) {
        REQUIRE(ladder.rows[i].p_value.has_value());
        CHECK(*ladder.rows[i].p_value > 0.99);
    }
    const auto anchors = run_anchor_validation(twin, sim_anchor_items());
    for (std::size_t i = 1; i < anchors.rows.size(); ++i) CHECK(*anchors.rows[i].p_value > 0.99);
}

TEST_CASE("a non-converged fit suppresses the differences below it") {
    const auto ds = fixture::sim_dataset(0.3, 500, 7);
    InvarianceOptions opts;
    opts.fit.max_iterations = 1;
    const auto r = run_invariance_ladder(ds, all_items(ds), opts);
    REQUIRE(r.rows.size() == 4);
    bool broken = false;
    for (const auto& row : r.rows) {
        if (broken) {
            CHECK_FALSE(row.delta_chisq.has_value());
            CHECK_FALSE(row.p_value.has_value());
        }
        if (!row.converged) broken = true;
    }
    CHECK(broken);
}

TEST_CASE("partial spec from 4 of 8 anchors frees the other items' focal thresholds") {
    const auto ds = fixture::sim_dataset(0.0, 200, 8);
    const auto spec = build_partial_spec(ds, sim_anchor_items());
    CHECK(spec.constraint_level == ConstraintLevel::partial_scalar_anchor);
    CHECK(spec.reference_group == ds.groups.front());
    const auto cs = build_constraints(spec, ds);
    int freed = 0;
    for (int j = 0; j < 8; ++j) {
        if (threshold_ties_for_item(cs, j) == 0) ++freed;
    }
    CHECK(freed == 4);
}

TEST_CASE("partial spec with every item as anchor matches scalar") {
    const auto ds = fixture::sim_dataset(0.0, 200, 9);
    const auto spec = build_partial_spec(ds, sim_item_names());
    auto scalar = spec;
    scalar.constraint_level = ConstraintLevel::scalar;
    const auto a = build_constraints(spec, ds), b = build_constraints(scalar, ds);
    CHECK(a.ties == b.ties);
    CHECK(a.free_coordinates() == b.free_coordinates());
}

TEST_CASE("partial spec errors and the single-anchor warning") {
    const auto ds = fixture::sim_dataset(0.0, 4000, 10);
    CHECK_THROWS_AS(build_partial_spec(ds, {}), std::invalid_argument);
    std::vector<std::string> warnings;
    const auto spec = build_partial_spec(ds, {"anchor1"}, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("single anchor") != std::string::npos);
    FitOptions o;
    o.compute_standard_errors = false;
    const auto f = fit(ds, spec, o);
    REQUIRE(f.converged);
    CHECK(std::abs(f.params.groups[1].latent_mean - 0.2) <= 0.15);
}

TEST_CASE("model df counts moments minus free parameters") {
    const auto ds = fixture::small_dataset(3, 2, 3);
    auto spec = all_items(ds);
    spec.constraint_level = ConstraintLevel::configural;
    const auto cs = build_constraints(spec, ds);
    // Per group: 3 * 2 thresholds + 3 correlations = 9; two groups = 18.
    CHECK(model_df(cs, cs.n_free()) == 18 - static_cast<int>(cs.n_free()));
}

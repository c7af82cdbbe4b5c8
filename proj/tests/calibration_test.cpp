// Repeated-sampling behaviour of the invariance tests and the three estimators.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ordinv/invariance.hpp"
#include "ordinv/simulation.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ordinv;

namespace {

constexpr int kSeeds = 100;

// Share of seeds for which `pred` holds, seeds run in parallel.
template <class F>
double share(int seeds, F pred) {
    std::vector<int> hit(static_cast<std::size_t>(seeds), 0);
    oracle::parallel_indices(seeds, oracle::worker_count(),
                             [&](int i) { hit[static_cast<std::size_t>(i)] = pred(static_cast<std::uint64_t>(500 + i)); });
    return std::accumulate(hit.begin(), hit.end(), 0.0) / seeds;
}

double step_p(const LadderResult& r, std::size_t row) { return r.rows[row].p_value.value_or(-1.0); }

double cell_bias(const SimulationReport& report, int condition, Estimator e) {
    for (const auto& c : report.cells) {
        if (c.condition == condition && c.estimator == e) return c.bias;
    }
    return NAN;
}

}  // namespace

TEST_CASE("clean anchors pass the metric step at N = 4000") {
    const double rate = share(kSeeds, [](std::uint64_t seed) {
        const auto ds = fixture::sim_dataset(0.5, 4000, seed);
        return step_p(run_anchor_validation(ds, sim_anchor_items()), 1) >= 0.05;
    });
    MESSAGE("metric pass rate ", rate);
    CHECK(rate >= 0.9);
}

TEST_CASE("an anchor set with shifted thresholds fails the scalar step") {
    // Two items carry a 0.5 threshold shift and two do not. A shift shared by
    // every anchor would be indistinguishable from a latent mean difference.
    const double rate = share(kSeeds, [](std::uint64_t seed) {
        const auto ds = fixture::sim_dataset(0.5, 4000, seed);
        const double p = step_p(run_anchor_validation(ds, {"dif1", "dif2", "anchor1", "anchor2"}), 2);
        return p >= 0.0 && p < 0.05;
    });
    MESSAGE("scalar rejection rate ", rate);
    CHECK(rate >= 0.9);
}

TEST_CASE("anchor-based gap recovers the true gap and a null gap") {
    for (double gap : {0.2, 0.0}) {
        const double rate = share(kSeeds, [gap](std::uint64_t seed) {
            const auto est = estimate_partial_anchor(fixture::sim_dataset(0.5, 4000, seed, gap));
            return est && std::abs(*est - gap) <= 0.08;
        });
        MESSAGE("gap ", gap, ": share within 0.08 ", rate);
        CHECK(rate >= 0.95);
    }
}

TEST_CASE("estimator bias over 100 replications") {
    GridAxes axes;
    axes.deltas = {0.0, 0.5};
    axes.lambdas = {0.9};
    axes.resid_vars = {1.0};
    axes.categories = {4, 7};
    axes.replications = 100;
    axes.base_seed = 77;
    const auto conditions = expand_grid(axes);
    const auto report = run_grid(conditions, oracle::worker_count());
    CHECK(report.flagged_conditions.empty());
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        const int c = static_cast<int>(i);
        const double delta = conditions[i].delta;
        const double partial = cell_bias(report, c, Estimator::partial_anchor);
        const double full = cell_bias(report, c, Estimator::full_scalar);
        CAPTURE(delta);
        CAPTURE(conditions[i].n_categories);
        CHECK(std::abs(partial) <= 0.03);
        if (delta == 0.0) CHECK(std::abs(full) <= 0.1);
        else CHECK(full > 0.1);
    }
}

TEST_CASE("full scalar on all eight items is less biased than on the four DIF items") {
    SimCondition all8, dif4;
    all8.delta = dif4.delta = 0.5;
    all8.replications = dif4.replications = 60;
    all8.base_seed = dif4.base_seed = 91;
    dif4.full_scalar_items = ScaleItems::dif_only_4;
    const auto report = run_grid({all8, dif4}, oracle::worker_count());
    const double b8 = cell_bias(report, 0, Estimator::full_scalar);
    const double b4 = cell_bias(report, 1, Estimator::full_scalar);
    MESSAGE("full scalar bias all_8 ", b8, ", dif_only_4 ", b4);
    CHECK(b8 < b4);
}

TEST_CASE("more categories shrink the attenuation of the unadjusted scale") {
    std::vector<SimCondition> conds(2);
    for (int i = 0; i < 2; ++i) {
        conds[static_cast<std::size_t>(i)].n_categories = i == 0 ? 4 : 7;
        conds[static_cast<std::size_t>(i)].scale_metric = ScaleMetric::pooled_sd;
        conds[static_cast<std::size_t>(i)].replications = 100;
        conds[static_cast<std::size_t>(i)].base_seed = 33;
    }
    const auto report = run_grid(conds, oracle::worker_count());
    const double k4 = cell_bias(report, 0, Estimator::scale), k7 = cell_bias(report, 1, Estimator::scale);
    MESSAGE("pooled_sd scale bias K=4 ", k4, ", K=7 ", k7);
    CHECK(std::abs(k7) < std::abs(k4));
}

TEST_CASE("mislabeled anchors bias the anchor-based gap") {
    std::vector<double> est(40, NAN);
    oracle::parallel_indices(40, oracle::worker_count(), [&](int i) {
        const auto ds = fixture::sim_dataset(0.5, 1000, static_cast<std::uint64_t>(700 + i));
        est[static_cast<std::size_t>(i)] = estimate_partial_anchor(ds, sim_dif_items()).value_or(NAN);
    });
    double mean = 0.0;
    for (double e : est) mean += e / est.size();
    MESSAGE("mean gap with DIF items as anchors ", mean);
    CHECK(mean - 0.2 > 0.2);
}

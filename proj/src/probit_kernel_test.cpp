#include "ordinv/probit_kernel.hpp"

#include "ordinv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ordinv;

namespace {

ParameterSet toy_params(const OrdinalDataset& ds, double loading, double shift) {
    const auto cs = build_constraints(fixture::spec_for(ds, ConstraintLevel::configural), ds);
    ParameterSet p = make_parameter_shape(cs);
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        auto& gp = p.groups[g];
        for (std::size_t j = 0; j < ds.items.size(); ++j) {
            gp.loadings[j] = loading + 0.1 * static_cast<double>(j);
            const int k = ds.items[j].n_categories;
            for (int m = 0; m < k - 1; ++m) gp.thresholds[j][static_cast<std::size_t>(m)] = -1.0 + m + shift * g;
            gp.residual_variances[j] = 1.0;
        }
        gp.latent_variance = 1.0;
    }
    return p;
}

}  // namespace

TEST_CASE("normal cdf, pdf and quantile match an independent implementation") {
    const boost::math::normal n01;
    for (double x = -37.0; x <= 8.0; x += 0.37) {
        const double ref = boost::math::cdf(n01, x);
        CHECK(normal_cdf(x) == doctest::Approx(ref).epsilon(1e-13));
        CHECK(normal_pdf(x) == doctest::Approx(boost::math::pdf(n01, x)).epsilon(1e-13));
    }
    for (double p : {1e-300, 1e-12, 0.001, 0.158655, 0.5, 0.9, 1 - 1e-12}) {
        CHECK(normal_quantile(p) == doctest::Approx(boost::math::quantile(n01, p)).epsilon(1e-12));
    }
    CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-15));
}

TEST_CASE("Gauss-Hermite rule is normalized, symmetric and exact for moments") {
    for (int n : {7, 15, 31, 61, 121, 201}) {
        const auto rule = gauss_hermite(n);
        REQUIRE(rule.count() == static_cast<std::size_t>(n));
        CHECK(std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(rule.nodes[static_cast<std::size_t>(n / 2)] == 0.0);
        for (int i = 0; i < n; ++i) {
            CHECK(rule.weights[static_cast<std::size_t>(i)] > 0.0);
            CHECK(rule.nodes[static_cast<std::size_t>(i)] ==
                  doctest::Approx(-rule.nodes[static_cast<std::size_t>(n - 1 - i)]).epsilon(1e-14));
        }
        // E z^2 = 1, E z^4 = 3, E z^6 = 15 under the standard normal.
        double m2 = 0, m4 = 0, m6 = 0;
        for (int i = 0; i < n; ++i) {
            const double z = rule.nodes[static_cast<std::size_t>(i)], w = rule.weights[static_cast<std::size_t>(i)];
            m2 += w * z * z;
            m4 += w * std::pow(z, 4);
            m6 += w * std::pow(z, 6);
        }
        CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(m6 == doctest::Approx(15.0).epsilon(1e-11));
    }
    CHECK_THROWS_AS(gauss_hermite(30), std::invalid_argument);
    CHECK_THROWS_AS(gauss_hermite(1), std::invalid_argument);
}

TEST_CASE("category probability examples") {
    const std::vector<double> one{0.0};
    CHECK(category_probability(0.0, one, 1.0, 3.7, 1) == 0.5);
    CHECK(category_probability(0.0, one, 1.0, -12.0, 1) == 0.5);
    const std::vector<double> three{-1.0, 0.0, 1.0};
    CHECK(category_probability(1.0, three, 1.0, 0.0, 1) == doctest::Approx(oracle::phi_cdf(-1.0)).epsilon(1e-14));
    CHECK(category_probability(1.0, three, 1.0, 0.0, 1) == doctest::Approx(0.158655).epsilon(1e-6));
    const std::vector<double> t{-0.7, 0.2, 1.1};
    double sum = 0.0;
    for (int k = 1; k <= 4; ++k) sum += category_probability(0.8, t, 1.0, 0.63, k);
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("category probability rejects bad input") {
    const std::vector<double> bad{0.5, 0.1};
    CHECK_THROWS_AS(category_probability(1.0, bad, 1.0, 0.0, 1), std::invalid_argument);
    const std::vector<double> ok{0.1, 0.5};
    CHECK_THROWS_AS(category_probability(1.0, ok, 1.0, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(category_probability(1.0, ok, 0.0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("category probabilities sum to one and track the oracle") {
    oracle::Uniform u(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = u.integer(2, 7);
        std::vector<double> tau;
        double next = u(-2.5, 0.0);
        for (int m = 0; m < k - 1; ++m) {
            tau.push_back(next);
            next += u(0.05, 1.2);
        }
        const double lambda = u(-2.0, 2.0), s2 = u(0.2, 3.0), eta = u(-6.0, 6.0);
        double sum = 0.0;
        for (int c = 1; c <= k; ++c) {
            const double p = category_probability(lambda, tau, s2, eta, c);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            CHECK(p == doctest::Approx(oracle::probit_category(lambda, tau, s2, eta, c)).epsilon(1e-9));
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("cumulative probability decreases in eta for a positive loading") {
    const std::vector<double> tau{-0.5, 0.4, 1.3};
    double prev = 1.0;
    for (double eta = -4.0; eta <= 4.0; eta += 0.25) {
        const double cum = category_probability(0.9, tau, 1.0, eta, 1) + category_probability(0.9, tau, 1.0, eta, 2);
        CHECK(cum <= prev);
        prev = cum;
    }
}

TEST_CASE("respondent loglik examples") {
    GroupParameters g;
    g.loadings = {0.0};
    g.thresholds = {{0.0}};
    g.residual_variances = {1.0};
    const auto rule = gauss_hermite(31);
    const std::vector<Response> none{kMissing};
    CHECK(respondent_loglik(none, g, rule) == 0.0);
    for (Response y : {Response{1}, Response{2}}) {
        const std::vector<Response> r{y};
        CHECK(respondent_loglik(r, g, rule) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    }

    GroupParameters two;
    two.loadings = {1.0, 1.0};
    two.thresholds = {{0.0}, {0.0}};
    two.residual_variances = {1.0, 1.0};
    const std::vector<Response> r{1, 1};
    const double ref = oracle::grid_integrate(r, two).loglik;
    CHECK(std::abs(respondent_loglik(r, two, rule) - ref) < 1e-6);
}

TEST_CASE("respondent loglik agrees with the grid oracle on the toy suite") {
    const auto rule = gauss_hermite(31);
    for (const auto& t : oracle::toy_suite()) {
        const double ours = respondent_loglik(t.responses, t.group, rule);
        CHECK(std::abs(ours - oracle::grid_integrate(t.responses, t.group).loglik) < 1e-5);
    }
}

TEST_CASE("total loglik: empty dataset, duplication and the oracle") {
    auto ds = fixture::small_dataset(2, 1, 2, 25);
    ds.items[0].n_categories = ds.items[1].n_categories = 2;
    const auto rule = gauss_hermite(31);
    const auto cs = build_constraints(fixture::spec_for(ds, ConstraintLevel::configural), ds);
    ParameterSet p = make_parameter_shape(cs);
    p.groups[0].loadings = {1.0, 1.0};
    p.groups[0].thresholds = {{0.0}, {0.0}};
    p.groups[0].residual_variances = {1.0, 1.0};

    OrdinalDataset empty = ds;
    empty.rows.clear();
    CHECK(total_loglik(empty, p, rule) == 0.0);

    // 50 respondents against the oracle, summed independently.
    OrdinalDataset fifty = ds;
    fifty.rows.insert(fifty.rows.end(), ds.rows.begin(), ds.rows.end());
    double ref = 0.0;
    for (const auto& row : fifty.rows) ref += oracle::grid_integrate(row.responses, p.groups[0]).loglik;
    const double total = total_loglik(fifty, p, rule);
    CHECK(std::abs(total - ref) < 1e-6);
    CHECK(total == doctest::Approx(2.0 * total_loglik(ds, p, rule)).epsilon(1e-14));
}

TEST_CASE("kernel matches respondent loglik and reports per-row terms") {
    const auto ds = fixture::sim_dataset(0.3, 300, 5);
    const auto p = toy_params(ds, 0.7, 0.2);
    const auto rule = gauss_hermite(31);
    const LikelihoodKernel kernel(ds, rule);
    const auto terms = kernel.respondent_terms(p);
    REQUIRE(terms.size() == ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); i += 37) {
        const auto& row = ds.rows[i];
        CHECK(terms[i] == doctest::Approx(respondent_loglik(row.responses, p.groups[static_cast<std::size_t>(row.group_index)], rule))
                              .epsilon(1e-12));
    }
    CHECK(kernel.loglik(p) == doctest::Approx(pairwise_sum(terms)).epsilon(1e-14));
}

TEST_CASE("analytic gradient agrees with central differences") {
    const auto ds = fixture::sim_dataset(0.3, 200, 9);
    auto p = toy_params(ds, 0.8, 0.3);
    p.groups[1].latent_mean = 0.25;
    p.groups[1].latent_variance = 1.3;
    const LikelihoodKernel kernel(ds, gauss_hermite(31));
    ParameterSet grad;
    kernel.loglik_gradient(p, grad);
    const auto cs = build_constraints(fixture::spec_for(ds, ConstraintLevel::configural), ds);
    const double h = 1e-5;
    for (const auto& c : cs.coordinates) {
        if (c.kind == ParamKind::residual_variance || c.kind == ParamKind::latent_intercept) continue;
        auto up = p, down = p;
        set_value(up, c, get_value(p, c) + h);
        set_value(down, c, get_value(p, c) - h);
        const double numeric = (kernel.loglik(up) - kernel.loglik(down)) / (2 * h);
        CHECK(get_value(grad, c) == doctest::Approx(numeric).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("sign reflections leave the likelihood unchanged") {
    oracle::Uniform u(3);
    const auto ds = fixture::sim_dataset(0.5, 200, 13);
    const auto rule = gauss_hermite(31);
    auto flipped = ds;
    for (auto& row : flipped.rows) {
        for (std::size_t j = 0; j < row.responses.size(); ++j) {
            if (row.responses[j] != kMissing) {
                row.responses[j] = static_cast<Response>(ds.items[j].n_categories + 1 - row.responses[j]);
            }
        }
    }
    for (int trial = 0; trial < 5; ++trial) {
        auto p = toy_params(ds, u(0.3, 1.2), u(-0.4, 0.4));
        p.groups[1].latent_mean = u(-0.5, 0.5);
        p.groups[1].latent_variance = u(0.6, 1.6);
        const double base = total_loglik(ds, p, rule);

        // eta -> -eta: negate every loading and every latent mean.
        auto negated = p;
        for (auto& g : negated.groups) {
            for (auto& l : g.loadings) l = -l;
            g.latent_mean = -g.latent_mean;
        }
        CHECK(total_loglik(ds, negated, rule) == doctest::Approx(base).epsilon(1e-12));

        // Reversed categories: y -> K + 1 - y, tau -> -reverse(tau), loadings negated.
        auto reflected = p;
        for (auto& g : reflected.groups) {
            for (auto& l : g.loadings) l = -l;
            for (auto& t : g.thresholds) {
                std::reverse(t.begin(), t.end());
                for (auto& v : t) v = -v;
            }
        }
        CHECK(total_loglik(flipped, reflected, rule) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("mean shift absorbed by thresholds leaves the likelihood unchanged") {
    const auto ds = fixture::sim_dataset(0.5, 400, 17);
    const auto rule = gauss_hermite(31);
    const auto p = toy_params(ds, 0.9, 0.1);
    const double base = total_loglik(ds, p, rule);
    for (double c : {-1.3, 0.4, 2.0}) {
        auto q = p;
        auto& g = q.groups[1];
        g.latent_mean += c;
        for (std::size_t j = 0; j < g.thresholds.size(); ++j) {
            for (auto& t : g.thresholds[j]) t += g.loadings[j] * c;
        }
        CHECK(std::abs(total_loglik(ds, q, rule) - base) < 1e-10);
    }
}

TEST_CASE("31 and 61 quadrature points agree on the demo data") {
    const auto ds = make_demo_dataset(7, 2000);
    auto spec = fixture::spec_for(ds, ConstraintLevel::partial_scalar_anchor, sim_anchor_items());
    FitOptions options;
    options.compute_standard_errors = false;
    const auto f = fit(ds, spec, options);
    REQUIRE(f.converged);
    const double a = total_loglik(ds, f.params, gauss_hermite(31));
    const double b = total_loglik(ds, f.params, gauss_hermite(61));
    CHECK(std::abs(a - b) < 1e-8);
}

TEST_CASE("pairwise sum matches a long-double accumulation") {
    std::vector<double> v;
    oracle::Uniform u(5);
    for (int i = 0; i < 10001; ++i) v.push_back(u(-1e3, 1e3));
    long double acc = 0.0L;
    for (double x : v) acc += x;
    CHECK(pairwise_sum(v) == doctest::Approx(static_cast<double>(acc)).epsilon(1e-13));
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

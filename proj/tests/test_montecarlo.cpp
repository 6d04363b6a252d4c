#include "checks.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numeric>

using namespace tspca;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

CctDistribution distribution(std::vector<double> values) {
    CctDistribution d;
    d.requested = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) d.sample_index.push_back(i);
    d.values = std::move(values);
    summarize(d);
    return d;
}

} // namespace

TEST_CASE("zero coefficient of variation reproduces the nominal vector", "[montecarlo]") {
    const auto& sys = testing::ieee14();
    const auto lambda = nominal_parameters(sys);
    UncertaintyModel model;
    model.set_load_cv(0.0);
    model.set_line_cv(0.0);
    const auto set = sample_parameters(lambda, model, {}, 20, 3);
    for (const auto& s : set.samples) CHECK(s == lambda.values());
}

TEST_CASE("truncated normal draws have the expected moments", "[montecarlo]") {
    const std::size_t n = 100000;
    double sum = 0.0;
    double ss = 0.0;
    double lo = 1e300;
    double hi = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = draw_parameter(17, i, 0, 100.0, 5.0, 4.0);
        sum += v;
        ss += (v - 100.0) * (v - 100.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    CHECK_THAT(mean, WithinAbs(100.0, 4.0 * 5.0 / std::sqrt(static_cast<double>(n))));
    CHECK_THAT(sd, WithinRel(5.0 * 0.99946, 0.01));
    CHECK(lo >= 80.0);
    CHECK(hi <= 120.0);
}

TEST_CASE("sampler statistics over every parameter class", "[montecarlo]") {
    const auto r = testing::sampler_statistics();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("draws depend only on seed, sample and parameter", "[montecarlo]") {
    const auto& sys = testing::ieee14();
    const auto lambda = nominal_parameters(sys);
    const UncertaintyModel model;
    const auto a = sample_parameters(lambda, model, {}, 50, 42);
    const auto b = sample_parameters(lambda, model, {}, 50, 42);
    const auto prefix = sample_parameters(lambda, model, {}, 10, 42);
    const auto other = sample_parameters(lambda, model, {}, 10, 43);
    CHECK(a.samples == b.samples);
    for (std::size_t i = 0; i < 10; ++i) CHECK(prefix.samples[i] == a.samples[i]);
    CHECK(other.samples[0] != a.samples[0]);

    auto mask = std::vector<bool>(lambda.size(), true);
    mask[lambda.position("P_L3")] = false;
    mask[lambda.position("X_2-3")] = false;
    const auto masked = sample_parameters(lambda, model, mask, 50, 42);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t k = 0; k < lambda.size(); ++k)
            CHECK(masked.samples[i][k] == (mask[k] ? lambda[k] : a.samples[i][k]));
    CHECK_THROWS_AS(sample_parameters(lambda, model, std::vector<bool>(3, false), 5, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_parameters(lambda, model, {}, 0, 1), std::invalid_argument);
}

TEST_CASE("draws keep the sign of the nominal value", "[montecarlo]") {
    for (std::size_t i = 0; i < 20000; ++i) {
        CHECK(draw_parameter(5, i, 1, -0.039, 0.3 * 0.039, 4.0) < 0.0);
        CHECK(draw_parameter(5, i, 2, 0.01, 0.3 * 0.01, 4.0) > 0.0);
    }
    CHECK(draw_parameter(5, 0, 3, 0.0, 0.0, 4.0) == 0.0);
}

TEST_CASE("a single nominal sample has zero spread", "[montecarlo]") {
    const auto& sys = testing::ieee14();
    const auto lambda = nominal_parameters(sys);
    const auto sc = testing::scenario(testing::case_one);
    const auto set = sample_parameters(lambda, UncertaintyModel{}, std::vector<bool>(lambda.size(), true), 1, 1);
    const auto d = estimate_cct_distribution(sys, lambda, set, sc);
    REQUIRE(d.size() == 1);
    CHECK(d.sigma == 0.0);
    CHECK(d.failures == 0);
    const auto nominal = critical_clearing_time(sys, lambda, sc, 1e-4);
    CHECK(d.mean == nominal.t_cr);
}

TEST_CASE("freezing every parameter gives a point mass", "[montecarlo]") {
    const auto& sys = testing::ieee14();
    const auto lambda = nominal_parameters(sys);
    const auto set = sample_parameters(lambda, UncertaintyModel{}, std::vector<bool>(lambda.size(), true), 4, 9);
    const auto d = estimate_cct_distribution(sys, lambda, set, testing::scenario(testing::case_two));
    REQUIRE(d.size() == 4);
    CHECK(d.sigma == 0.0);
    for (double v : d.values) CHECK(v == d.values.front());
}

TEST_CASE("results do not depend on the worker count", "[montecarlo][invariant]") {
    const auto r = testing::worker_determinism();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("variance retention", "[montecarlo]") {
    const auto full = distribution({0.30, 0.32, 0.35, 0.29});
    CHECK(variance_retention(full, full) == 1.0);
    CHECK(sigma_ratio(full, full) == 1.0);
    const auto flat = distribution({0.31, 0.31, 0.31});
    CHECK(variance_retention(full, flat) == 0.0);
    CHECK_THROWS_AS(variance_retention(flat, full), std::domain_error);
    CHECK_THROWS_AS(sigma_ratio(flat, full), std::domain_error);
    CHECK_THROWS_AS(variance_retention(full, CctDistribution{}), std::invalid_argument);
    const auto half = distribution({0.30, 0.31, 0.325, 0.295});
    CHECK_THAT(variance_retention(full, half), WithinRel(0.25, 1e-9));
    CHECK_THAT(sigma_ratio(full, half), WithinRel(0.5, 1e-9));
}

TEST_CASE("summary uses the N-1 denominator", "[montecarlo]") {
    const auto d = distribution({1.0, 2.0, 3.0, 4.0});
    CHECK(d.mean == 2.5);
    CHECK_THAT(d.sigma, WithinRel(std::sqrt(5.0 / 3.0), 1e-15));
}

TEST_CASE("histogram covers the sample range", "[montecarlo]") {
    const auto h = histogram({0.1, 0.25, 0.25, 0.4}, 3);
    REQUIRE(h.counts.size() == 3);
    CHECK(h.edges.front() == 0.1);
    CHECK_THAT(h.edges.back(), WithinAbs(0.4, 1e-15));
    CHECK(h.counts == std::vector<std::size_t>{1, 2, 1});
    const auto point = histogram({0.3, 0.3}, 4);
    CHECK(std::accumulate(point.counts.begin(), point.counts.end(), std::size_t{0}) == 2);
    CHECK(histogram({}, 5).counts.empty());
}

TEST_CASE("more than 10% failed samples marks the estimate unreliable", "[montecarlo]") {
    const auto& sys = testing::ieee14();
    const auto lambda = nominal_parameters(sys);
    auto sc = testing::scenario(testing::case_one);
    sc.max_clearing_time = 0.05;
    const auto set = sample_parameters(lambda, UncertaintyModel{}, {}, 4, 1);
    const auto d = estimate_cct_distribution(sys, lambda, set, sc);
    CHECK(d.failures == 4);
    CHECK(d.unreliable);
    CHECK(d.size() == 0);
}

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "nestedrisk/payoff.hpp"
#include "test_util.hpp"

using namespace nestedrisk;

namespace {

Portfolio single_instrument(const MarketModel& m, Instrument inst) {
    return make_portfolio(m, {inst});
}

double bs_call(double s, double k, double r, double sigma, double t) {
    const double sq = sigma * std::sqrt(t);
    const double d1 = (std::log(s / k) + (r + 0.5 * sigma * sigma) * t) / sq;
    return s * normal_cdf(d1) - k * std::exp(-r * t) * normal_cdf(d1 - sq);
}

}  // namespace

TEST_CASE("bridge survival handles boundaries and limits", "[payoff]") {
    CHECK(bridge_survival(121.0, 100.0, 120.0, 0.2, 0.005, BarrierDirection::Up) == 0.0);
    CHECK(bridge_survival(100.0, 120.5, 120.0, 0.2, 0.005, BarrierDirection::Up) == 0.0);
    CHECK(bridge_survival(79.0, 100.0, 80.0, 0.2, 0.005, BarrierDirection::Down) == 0.0);
    CHECK(bridge_survival(100.0, 101.0, 1e9, 0.2, 0.005, BarrierDirection::Up) == 1.0);
    CHECK(bridge_survival(100.0, 101.0, 1e-9, 0.2, 0.005, BarrierDirection::Down) == 1.0);
    // tighter barrier, lower survival
    double prev = 1.0;
    for (double u : {112.0, 108.0, 104.0, 102.0}) {
        const double s = bridge_survival(100.0, 101.0, u, 0.2, 0.005, BarrierDirection::Up);
        CHECK(s <= prev);
        CHECK(s >= 0.0);
        prev = s;
    }
}

TEST_CASE("bridge survival matches sub-discretized crossing frequencies", "[payoff]") {
    // near-barrier case; the discretized bridge undercounts crossings at rate
    // K^{-1/2}, so extrapolate over substep counts before comparing
    const double la = std::log(100.0), lb = std::log(101.0), lu = std::log(103.0);
    const double sigma = 0.2, dt = 1.0 / 200.0;
    const double formula_cross =
        1.0 - bridge_survival(100.0, 101.0, 103.0, sigma, dt, BarrierDirection::Up);
    auto seq = rng::Stream(1234).substream(0);
    const std::size_t nbridge = 100000;
    std::vector<std::size_t> substeps{128, 512, 2048};
    std::vector<double> freq, invsqrt;
    std::vector<double> se;
    for (std::size_t K : substeps) {
        std::size_t crossings = 0;
        std::vector<double> w(K);
        const double step_sd = sigma * std::sqrt(dt / static_cast<double>(K));
        for (std::size_t b = 0; b < nbridge; ++b) {
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                acc += step_sd * seq.next_normal();
                w[k] = acc;
            }
            const double endpoint = w[K - 1];
            bool crossed = false;
            for (std::size_t k = 0; k + 1 < K; ++k) {
                const double frac = static_cast<double>(k + 1) / static_cast<double>(K);
                const double bridged = la + w[k] + frac * (lb - la - endpoint);
                if (bridged >= lu) {
                    crossed = true;
                    break;
                }
            }
            if (crossed) ++crossings;
        }
        const double p = static_cast<double>(crossings) / static_cast<double>(nbridge);
        freq.push_back(p);
        se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(nbridge)));
        invsqrt.push_back(1.0 / std::sqrt(static_cast<double>(K)));
    }
    const auto fit = fit_line(invsqrt, freq);  // intercept = continuum limit
    const double combined_se = 2.0 * se.back();
    CHECK(std::abs(fit.intercept - formula_cross) < 3.0 * combined_se);
}

TEST_CASE("payoff basics: out-of-the-money calls and distant barriers", "[payoff]") {
    const auto m = testutil::one_asset_model(50, 3);
    const auto eur = single_instrument(m, {InstrumentKind::EuropeanCall, 0, 100.0, 0.0, 1.0, 0, 1});
    const auto capped =
        single_instrument(m, {InstrumentKind::UpOutCall, 0, 100.0, 1e12, 1.0, 0, 1});
    const auto ostream = rng::stream_for(2, rng::Purpose::OuterScenarios);
    const auto istream = rng::stream_for(2, rng::Purpose::InnerPooled);
    for (std::size_t i = 0; i < 50; ++i) {
        const auto x = simulate_outer_one(m, i, ostream);
        const auto y = simulate_inner_pooled_one(m, i, istream);
        const double pay_eur = discounted_payoff(eur, x, y);
        CHECK(pay_eur >= 0.0);
        if (y.terminal()[0] <= 100.0) CHECK(pay_eur == 0.0);
        CHECK(discounted_payoff(capped, x, y) == Catch::Approx(pay_eur).epsilon(1e-14));
    }
}

TEST_CASE("up-and-out payoff shrinks pathwise as the barrier tightens", "[payoff]") {
    const auto m = testutil::one_asset_model(50, 3);
    const auto tight = single_instrument(m, {InstrumentKind::UpOutCall, 0, 90.0, 112.0, 1.0, 0, 1});
    const auto loose = single_instrument(m, {InstrumentKind::UpOutCall, 0, 90.0, 120.0, 1.0, 0, 1});
    const auto ostream = rng::stream_for(9, rng::Purpose::OuterScenarios);
    const auto istream = rng::stream_for(9, rng::Purpose::InnerPooled);
    for (std::size_t i = 0; i < 100; ++i) {
        const auto x = simulate_outer_one(m, i, ostream);
        const auto y = simulate_inner_pooled_one(m, i, istream);
        CHECK(discounted_payoff(tight, x, y) <= discounted_payoff(loose, x, y) + 1e-15);
    }
}

TEST_CASE("zero-volatility geometric asian matches direct arithmetic", "[payoff]") {
    auto m = testutil::one_asset_model(50, 5, 1e-10);
    const auto p =
        single_instrument(m, {InstrumentKind::GeometricAsianCall, 0, 100.0, 0.0, 1.0, 0, 1});
    const auto x = simulate_outer(m, 1, rng::stream_for(1, rng::Purpose::OuterScenarios)).front();
    const auto y =
        simulate_inner_pooled(m, 1, rng::stream_for(1, rng::Purpose::InnerPooled)).front();
    // deterministic prices: mu drift up to tau, r drift afterwards
    const double tau = m.grid.tau();
    double logsum = 0.0;
    for (std::size_t k = 1; k <= 50; ++k) {
        const double t = m.grid.times[k];
        const double logp = t <= tau ? std::log(100.0) + m.mu * t
                                     : std::log(100.0) + m.mu * tau + m.r * (t - tau);
        logsum += logp;
    }
    const double geo = std::exp(logsum / 50.0);
    const double expected = std::exp(-m.r * 1.0) * std::max(geo - 100.0, 0.0);
    CHECK(discounted_payoff(p, x, y) == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("analytic european value at the horizon has the deterministic limit", "[payoff]") {
    auto m = testutil::one_asset_model(50, 5, 1e-10);
    const auto p =
        single_instrument(m, {InstrumentKind::EuropeanCall, 0, 100.0, 0.0, 1.0, 0, 1});
    const auto x = simulate_outer(m, 1, rng::stream_for(3, rng::Purpose::OuterScenarios)).front();
    const double s_tau = x.last_prices()[0];
    const double tau = m.grid.tau();
    const double rest = 1.0 - tau;
    const double expected =
        std::exp(-m.r * tau) * std::exp(-m.r * rest) *
        std::max(s_tau * std::exp(m.r * rest) - 100.0, 0.0);
    CHECK(analytic_portfolio_value(p, &x, 5) == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("knocked-out prefix zeroes the analytic value", "[payoff]") {
    const auto m = testutil::one_asset_model(50, 3);
    const auto p = single_instrument(m, {InstrumentKind::UpOutCall, 0, 90.0, 118.0, 1.0, 0, 1});
    OuterScenario x;
    x.d = 1;
    x.path = {105.0, 119.0, 104.0};  // second point breaches U = 118
    CHECK(analytic_portfolio_value(p, &x, 3) == 0.0);
    CHECK(analytic_loss(p, x) == Catch::Approx(p.v0));
}

TEST_CASE("time-zero values recover the vanilla limit", "[payoff]") {
    const auto m = testutil::one_asset_model(200, 12);
    const auto far = single_instrument(m, {InstrumentKind::UpOutCall, 0, 90.0, 1e7, 1.0, 0, 1});
    CHECK(far.v0 == Catch::Approx(bs_call(100.0, 90.0, 0.05, 0.2, 1.0)).epsilon(1e-9));
    const auto eur = single_instrument(m, {InstrumentKind::EuropeanCall, 0, 90.0, 0.0, 1.0, 0, 1});
    CHECK(eur.v0 == Catch::Approx(bs_call(100.0, 90.0, 0.05, 0.2, 1.0)).epsilon(1e-12));
}

TEST_CASE("analytic horizon values match conditional monte carlo", "[payoff]") {
    const auto m = testutil::one_asset_model(200, 12);
    const std::vector<Instrument> kinds = {
        {InstrumentKind::EuropeanCall, 0, 100.0, 0.0, 1.0, 0, 1},
        {InstrumentKind::GeometricAsianCall, 0, 100.0, 0.0, 1.0, 0, 4},
        {InstrumentKind::UpOutCall, 0, 90.0, 118.0, 1.0, 0, 1},
        {InstrumentKind::DownOutCall, 0, 90.0, 82.0, 1.0, 0, 1},
    };
    const auto x =
        simulate_outer(m, 1, rng::stream_for(12, rng::Purpose::OuterScenarios)).front();
    const std::size_t paths = 100000;
    std::uint64_t which = 0;
    for (const auto& inst : kinds) {
        const auto p = single_instrument(m, inst);
        const double target = analytic_portfolio_value(p, &x, m.grid.horizon_index);
        const auto stream = rng::stream_for(13, rng::Purpose::InnerConditional).fork(which++);
        std::vector<double> payoffs(paths);
        for (std::size_t j = 0; j < paths; ++j) {
            const auto y = simulate_inner_conditional_one(m, x, j, stream);
            payoffs[j] = discounted_payoff(p, x, y);
        }
        const double mean = mean_of(payoffs);
        const double se = testutil::standard_error(payoffs);
        INFO(instrument_kind_name(inst.kind) << " mean=" << mean << " target=" << target
                                             << " se=" << se);
        CHECK(std::abs(mean - target) < 4.0 * se);
    }
}

TEST_CASE("conditional loss mean matches the analytic loss for a barrier book", "[payoff]") {
    const auto p = testutil::ten_barrier_portfolio();
    const auto& m = p.model;
    const auto x =
        simulate_outer(m, 1, rng::stream_for(21, rng::Purpose::OuterScenarios)).front();
    const double target = analytic_loss(p, x);
    const auto stream = rng::stream_for(22, rng::Purpose::InnerConditional);
    const std::size_t paths = 100000;
    std::vector<double> losses(paths);
    for (std::size_t j = 0; j < paths; ++j) {
        losses[j] = loss(p, x, simulate_inner_conditional_one(m, x, j, stream));
    }
    const double mean = mean_of(losses);
    CHECK(std::abs(mean - target) < 4.0 * testutil::standard_error(losses));
}

TEST_CASE("pair evaluator reproduces the reference payoff", "[payoff]") {
    MarketModel m;
    m.d = 3;
    m.s0 = {100.0, 95.0, 105.0};
    m.mu = 0.08;
    m.r = 0.05;
    m.vol = {0.2, 0.0, 0.0, 0.05, 0.18, 0.0, 0.03, 0.02, 0.22};
    m.grid = TimeGrid::uniform(1.0, 200, 12);
    std::vector<Instrument> insts = {
        {InstrumentKind::EuropeanCall, 0, 100.0, 0.0, 2.0, 0, 1},
        {InstrumentKind::EuropeanCall, 1, 90.0, 0.0, -1.0, 0, 1},
        {InstrumentKind::GeometricAsianCall, 1, 95.0, 0.0, 1.0, 0, 4},
        {InstrumentKind::GeometricAsianCall, 1, 105.0, 0.0, 1.5, 0, 4},
        {InstrumentKind::UpOutCall, 2, 100.0, 125.0, 1.0, 0, 1},
        {InstrumentKind::UpOutCall, 2, 110.0, 125.0, 1.0, 0, 1},
        {InstrumentKind::DownOutCall, 2, 100.0, 88.0, 1.0, 0, 1},
        {InstrumentKind::EuropeanCall, 0, 120.0, 0.0, 1.0, 100, 1},  // shorter maturity
    };
    const auto p = make_portfolio(m, insts);
    const PortfolioPairEvaluator pe(p);
    std::vector<double> sc(pe.scenario_summary_size()), in(pe.inner_summary_size());
    const auto ostream = rng::stream_for(31, rng::Purpose::OuterScenarios);
    const auto istream = rng::stream_for(31, rng::Purpose::InnerPooled);
    for (std::size_t i = 0; i < 15; ++i) {
        const auto x = simulate_outer_one(m, i, ostream);
        pe.summarize_scenario(x, sc);
        for (std::size_t j = 0; j < 15; ++j) {
            const auto y = simulate_inner_pooled_one(m, 100 + j, istream);
            pe.summarize_inner(y, in);
            const double ref = discounted_payoff(p, x, y);
            const double fast = pe.pair_discounted_payoff(sc.data(), in.data());
            CHECK(fast == Catch::Approx(ref).margin(1e-10).epsilon(1e-10));
        }
    }
}

TEST_CASE("netted-out book has identically zero loss", "[payoff]") {
    const auto m = testutil::one_asset_model(50, 3);
    auto p = make_portfolio(
        m, {{InstrumentKind::EuropeanCall, 0, 100.0, 0.0, 0.0, 0, 1},
            {InstrumentKind::UpOutCall, 0, 90.0, 120.0, 0.0, 0, 1}});
    CHECK(p.v0 == 0.0);
    const auto x = simulate_outer(m, 1, rng::stream_for(1, rng::Purpose::OuterScenarios)).front();
    const auto y = simulate_inner_pooled(m, 1, rng::stream_for(1, rng::Purpose::InnerPooled)).front();
    CHECK(loss(p, x, y) == 0.0);
}

TEST_CASE("portfolio validation pinpoints bad instruments", "[payoff]") {
    const auto m = testutil::one_asset_model(50, 3);
    CHECK_THROWS_WITH(
        make_portfolio(m, {{InstrumentKind::EuropeanCall, 3, 100.0, 0.0, 1.0, 0, 1}}),
        Catch::Matchers::ContainsSubstring("instruments[0]"));
    CHECK_THROWS_AS(make_portfolio(m, {}), std::invalid_argument);
    // Asian averaging grid must divide the maturity
    CHECK_THROWS_AS(
        make_portfolio(m, {{InstrumentKind::GeometricAsianCall, 0, 100.0, 0.0, 1.0, 0, 7}}),
        std::invalid_argument);
    // barrier instruments monitor every step
    CHECK_THROWS_AS(
        make_portfolio(m, {{InstrumentKind::UpOutCall, 0, 100.0, 120.0, 1.0, 0, 2}}),
        std::invalid_argument);
}

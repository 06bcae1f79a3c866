#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "nestedrisk/math.hpp"
#include "nestedrisk/rng.hpp"
#include "test_util.hpp"

using namespace nestedrisk;

TEST_CASE("inverse normal cdf matches known quantiles", "[math]") {
    CHECK(normal_inv_cdf(0.5) == Catch::Approx(0.0).margin(1e-15));
    CHECK(normal_inv_cdf(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_inv_cdf(0.95) == Catch::Approx(1.6448536269514722).epsilon(1e-12));
    CHECK(normal_inv_cdf(0.05) == Catch::Approx(-1.6448536269514722).epsilon(1e-12));
    for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9}) {
        CHECK(normal_cdf(normal_inv_cdf(p)) == Catch::Approx(p).epsilon(1e-9));
    }
    CHECK_THROWS_AS(normal_inv_cdf(0.0), std::invalid_argument);
    CHECK_THROWS_AS(normal_inv_cdf(1.0), std::invalid_argument);
}

TEST_CASE("pairwise sum agrees with reference", "[math]") {
    auto seq = rng::Stream(123).substream(0);
    std::vector<double> v(10001);
    long double ref = 0.0;
    for (auto& x : v) {
        x = seq.next_normal();
        ref += x;
    }
    CHECK(pairwise_sum(v) == Catch::Approx(static_cast<double>(ref)).margin(1e-9));
}

TEST_CASE("empirical quantile is the smallest order statistic covering q", "[math]") {
    std::vector<double> losses;
    for (int i = 100; i >= 1; --i) losses.push_back(i);
    CHECK(empirical_quantile(losses, 0.90) == 90.0);
    CHECK(empirical_quantile(losses, 0.901) == 91.0);
    CHECK(empirical_quantile(losses, 1.0) == 100.0);
    CHECK(empirical_quantile({7.0}, 0.5) == 7.0);
}

TEST_CASE("line fit recovers exact coefficients", "[math]") {
    std::vector<double> x{1.0, 2.0, 3.0, 4.0};
    std::vector<double> y;
    for (double xi : x) y.push_back(3.0 - 2.0 * xi);
    const auto fit = fit_line(x, y);
    CHECK(fit.slope == Catch::Approx(-2.0).epsilon(1e-12));
    CHECK(fit.intercept == Catch::Approx(3.0).epsilon(1e-12));
    CHECK(fit.slope_stderr == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("least squares solves well-posed and rank-deficient systems", "[math]") {
    // rows of [1, x, x^2] at x = -1, 0, 1, 2 with y = 2 - x + 0.5 x^2
    std::vector<double> xs{-1.0, 0.0, 1.0, 2.0};
    std::vector<double> design;
    std::vector<double> y;
    for (double x : xs) {
        design.insert(design.end(), {1.0, x, x * x});
        y.push_back(2.0 - x + 0.5 * x * x);
    }
    auto res = solve_least_squares(design, xs.size(), 3, y);
    REQUIRE_FALSE(res.rank_deficient);
    CHECK(res.coeffs[0] == Catch::Approx(2.0).margin(1e-9));
    CHECK(res.coeffs[1] == Catch::Approx(-1.0).margin(1e-9));
    CHECK(res.coeffs[2] == Catch::Approx(0.5).margin(1e-9));

    // duplicate column makes the system singular; the minimum-norm solution
    // splits the weight evenly between the copies
    std::vector<double> dup;
    for (double x : xs) dup.insert(dup.end(), {1.0, x, x});
    std::vector<double> y2;
    for (double x : xs) y2.push_back(1.0 + 2.0 * x);
    auto res2 = solve_least_squares(dup, xs.size(), 3, y2);
    CHECK(res2.rank_deficient);
    CHECK(res2.coeffs[1] == Catch::Approx(1.0).margin(1e-9));
    CHECK(res2.coeffs[2] == Catch::Approx(1.0).margin(1e-9));
    double fitted = res2.coeffs[0] + res2.coeffs[1] * 2.0 + res2.coeffs[2] * 2.0;
    CHECK(fitted == Catch::Approx(5.0).margin(1e-9));
}

TEST_CASE("jarque-bera separates normal from skewed samples", "[math]") {
    auto seq = rng::Stream(99).substream(0);
    std::vector<double> normal(4000), skewed(4000);
    for (auto& x : normal) x = seq.next_normal();
    for (auto& x : skewed) {
        const double z = seq.next_normal();
        x = z * z;
    }
    CHECK(jarque_bera(normal) < 9.21);
    CHECK(jarque_bera(skewed) > 9.21);
}

TEST_CASE("counter rng is reproducible and substreams are disjoint", "[rng]") {
    auto a = rng::stream_for(42, rng::Purpose::OuterScenarios).substream(7);
    auto b = rng::stream_for(42, rng::Purpose::OuterScenarios).substream(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    auto c = rng::stream_for(42, rng::Purpose::OuterScenarios).substream(8);
    auto d = rng::stream_for(42, rng::Purpose::InnerPooled).substream(7);
    auto e = rng::stream_for(43, rng::Purpose::OuterScenarios).substream(7);
    auto fresh = rng::stream_for(42, rng::Purpose::OuterScenarios).substream(7);
    std::set<std::uint64_t> firsts{fresh.next_u64(), c.next_u64(), d.next_u64(), e.next_u64()};
    CHECK(firsts.size() == 4);
}

TEST_CASE("uniforms stay inside the open interval", "[rng]") {
    auto seq = rng::Stream(5).substream(0);
    for (int i = 0; i < 100000; ++i) {
        const double u = seq.next_uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("normal draws have the right first two moments", "[rng]") {
    auto seq = rng::Stream(6).substream(3);
    const std::size_t n = 200000;
    std::vector<double> z(n);
    for (auto& x : z) x = seq.next_normal();
    const double mean = mean_of(z);
    const double var = population_variance(z, mean);
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    // Var[z^2] = 2 for a standard normal
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
    CHECK(testutil::ks_pvalue(std::vector<double>(z.begin(), z.begin() + 20000),
                              [](double x) { return normal_cdf(x); }) > 0.01);
}

TEST_CASE("stream fork decorrelates child streams", "[rng]") {
    const auto base = rng::stream_for(1, rng::Purpose::InnerConditional);
    auto f0 = base.fork(0).substream(0);
    auto f1 = base.fork(1).substream(0);
    CHECK(f0.next_u64() != f1.next_u64());
}

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nestedrisk/math.hpp"
#include "nestedrisk/model.hpp"
#include "nestedrisk/payoff.hpp"

namespace testutil {

// One-sample Kolmogorov-Smirnov p-value against a given CDF.
inline double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        dmax = std::max(dmax, std::abs(f - static_cast<double>(i) / n));
        dmax = std::max(dmax, std::abs(static_cast<double>(i + 1) / n - f));
    }
    const double x = std::sqrt(n) * dmax;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
    }
    return std::clamp(p, 0.0, 1.0);
}

inline double standard_error(std::span<const double> v) {
    return nestedrisk::sample_std(v) / std::sqrt(static_cast<double>(v.size()));
}

// Single-asset market on a uniform grid, defaults matching the ten-barrier
// setup but with a configurable grid for cheaper unit runs.
inline nestedrisk::MarketModel one_asset_model(std::size_t steps = 200,
                                               std::size_t horizon = 12, double sigma = 0.2,
                                               double mu = 0.08, double r = 0.05) {
    nestedrisk::MarketModel m;
    m.d = 1;
    m.s0 = {100.0};
    m.mu = mu;
    m.r = r;
    m.vol = {sigma};
    m.grid = nestedrisk::TimeGrid::uniform(1.0, steps, horizon);
    return m;
}

inline nestedrisk::Portfolio ten_barrier_portfolio(std::size_t steps = 200,
                                                   std::size_t horizon = 12) {
    using namespace nestedrisk;
    std::vector<Instrument> insts;
    for (double u : {118.0, 119.0, 120.0, 121.0, 122.0}) {
        insts.push_back({InstrumentKind::UpOutCall, 0, 90.0, u, 1.0, 0, 1});
    }
    for (double dbar : {78.0, 79.0, 80.0, 81.0, 82.0}) {
        insts.push_back({InstrumentKind::DownOutCall, 0, 90.0, dbar, 1.0, 0, 1});
    }
    return make_portfolio(one_asset_model(steps, horizon), std::move(insts));
}

}  // namespace testutil

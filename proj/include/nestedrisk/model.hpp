#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestedrisk/rng.hpp"

namespace nestedrisk {

// Discrete monitoring grid 0 = t_0 < t_1 < ... < t_N = T with the risk
// horizon tau = t_{k*} strictly inside.
struct TimeGrid {
    std::vector<double> times;        // includes t_0 = 0, size N+1
    std::size_t horizon_index = 0;    // k*, 1 <= k* <= N-1

    static TimeGrid uniform(double maturity, std::size_t steps, std::size_t horizon_index) {
        TimeGrid g;
        g.times.resize(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) {
            g.times[k] = maturity * static_cast<double>(k) / static_cast<double>(steps);
        }
        g.horizon_index = horizon_index;
        g.validate();
        return g;
    }

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double maturity() const { return times.back(); }
    double tau() const { return times[horizon_index]; }
    double dt(std::size_t k) const { return times[k] - times[k - 1]; }

    void validate() const {
        if (times.size() < 3) throw std::invalid_argument("grid: need at least two steps");
        if (times.front() != 0.0) throw std::invalid_argument("grid: t_0 must be 0");
        for (std::size_t k = 1; k < times.size(); ++k) {
            if (!(times[k] > times[k - 1])) {
                throw std::invalid_argument("grid: times must be strictly increasing");
            }
        }
        if (horizon_index < 1 || horizon_index >= steps()) {
            throw std::invalid_argument("grid: horizon_index must satisfy 1 <= k* <= N-1");
        }
    }
};

// Multi-asset Black-Scholes market. vol is the lower-triangular loading
// matrix: the log increment of asset i over dt is
//   (drift - a_i^2/2) dt + sqrt(dt) * sum_{j<=i} vol[i][j] Z_j,
// with a_i^2 = sum_{j<=i} vol[i][j]^2 and Z iid standard normal.
struct MarketModel {
    std::size_t d = 1;
    std::vector<double> s0;      // initial prices, length d
    double mu = 0.0;             // real-world drift
    double r = 0.0;              // risk-free rate
    std::vector<double> vol;     // row-major d x d, lower-triangular
    TimeGrid grid;

    double vol_at(std::size_t i, std::size_t j) const { return vol[i * d + j]; }

    // Total per-asset variance per unit time.
    double asset_variance(std::size_t i) const {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += vol_at(i, j) * vol_at(i, j);
        return s;
    }

    double asset_vol(std::size_t i) const { return std::sqrt(asset_variance(i)); }

    void validate() const {
        grid.validate();
        if (d == 0) throw std::invalid_argument("model: asset count must be positive");
        if (s0.size() != d) throw std::invalid_argument("model: s0 must have one entry per asset");
        for (double v : s0) {
            if (!(v > 0.0)) throw std::invalid_argument("model: s0 must be strictly positive");
        }
        if (vol.size() != d * d) throw std::invalid_argument("model: vol must be d x d");
        for (std::size_t i = 0; i < d; ++i) {
            if (!(vol_at(i, i) > 0.0)) {
                throw std::invalid_argument("model: vol diagonal must be strictly positive");
            }
            for (std::size_t j = i + 1; j < d; ++j) {
                if (vol_at(i, j) != 0.0) {
                    throw std::invalid_argument("model: vol must be lower-triangular");
                }
            }
        }
    }
};

// Prices S_{t_1}..S_{t_{k*}} under the real-world measure. Column k holds the
// prices at t_{k+1}; all entries are strictly positive.
struct OuterScenario {
    std::size_t d = 1;
    std::vector<double> path;    // size d * k*, step-major
    std::uint64_t seed_tag = 0;  // substream index used to generate this path

    std::size_t steps() const { return d == 0 ? 0 : path.size() / d; }
    std::span<const double> prices_at(std::size_t step) const {
        return {path.data() + step * d, d};
    }
    std::span<const double> last_prices() const { return prices_at(steps() - 1); }
};

// Prices S_{t_{k*+1}}..S_{t_N}; the first column is the point entering the
// likelihood ratio.
struct InnerPath {
    std::size_t d = 1;
    std::vector<double> path;    // size d * (N - k*), step-major
    std::uint64_t seed_tag = 0;

    std::size_t steps() const { return d == 0 ? 0 : path.size() / d; }
    std::span<const double> prices_at(std::size_t step) const {
        return {path.data() + step * d, d};
    }
    std::span<const double> first_point() const { return prices_at(0); }
    std::span<const double> terminal() const { return prices_at(steps() - 1); }
};

namespace detail {

// One exact lognormal step in log space; z holds d fresh standard normals.
inline void gbm_step(const MarketModel& model, double drift, double dt,
                     std::span<const double> z, std::span<double> log_prices) {
    const double sqdt = std::sqrt(dt);
    for (std::size_t i = 0; i < model.d; ++i) {
        double diffusion = 0.0;
        for (std::size_t j = 0; j <= i; ++j) diffusion += model.vol_at(i, j) * z[j];
        log_prices[i] += (drift - 0.5 * model.asset_variance(i)) * dt + sqdt * diffusion;
    }
}

inline void draw_normals(rng::Sequence& seq, std::span<double> z) {
    for (double& v : z) v = seq.next_normal();
}

}  // namespace detail

inline OuterScenario simulate_outer_one(const MarketModel& model, std::uint64_t index,
                                        const rng::Stream& stream) {
    const std::size_t kstar = model.grid.horizon_index;
    OuterScenario scen;
    scen.d = model.d;
    scen.seed_tag = index;
    scen.path.resize(model.d * kstar);
    rng::Sequence seq = stream.substream(index);
    std::vector<double> logp(model.d);
    std::vector<double> z(model.d);
    for (std::size_t i = 0; i < model.d; ++i) logp[i] = std::log(model.s0[i]);
    for (std::size_t k = 1; k <= kstar; ++k) {
        detail::draw_normals(seq, z);
        detail::gbm_step(model, model.mu, model.grid.dt(k), z, logp);
        for (std::size_t i = 0; i < model.d; ++i) {
            scen.path[(k - 1) * model.d + i] = std::exp(logp[i]);
        }
    }
    return scen;
}

inline std::vector<OuterScenario> simulate_outer(const MarketModel& model, std::size_t n,
                                                 const rng::Stream& stream) {
    if (n < 1) throw std::invalid_argument("simulate_outer: n must be >= 1");
    std::vector<OuterScenario> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(simulate_outer_one(model, i, stream));
    return out;
}

// One risk-neutral continuation of a given scenario from tau to maturity.
inline InnerPath simulate_inner_conditional_one(const MarketModel& model,
                                                const OuterScenario& scenario,
                                                std::uint64_t index,
                                                const rng::Stream& stream) {
    const std::size_t kstar = model.grid.horizon_index;
    const std::size_t nsteps = model.grid.steps() - kstar;
    InnerPath path;
    path.d = model.d;
    path.seed_tag = index;
    path.path.resize(model.d * nsteps);
    rng::Sequence seq = stream.substream(index);
    std::vector<double> logp(model.d);
    std::vector<double> z(model.d);
    const auto start = scenario.last_prices();
    for (std::size_t i = 0; i < model.d; ++i) logp[i] = std::log(start[i]);
    for (std::size_t k = kstar + 1; k <= model.grid.steps(); ++k) {
        detail::draw_normals(seq, z);
        detail::gbm_step(model, model.r, model.grid.dt(k), z, logp);
        for (std::size_t i = 0; i < model.d; ++i) {
            path.path[(k - kstar - 1) * model.d + i] = std::exp(logp[i]);
        }
    }
    return path;
}

inline std::vector<InnerPath> simulate_inner_conditional(const MarketModel& model,
                                                         const OuterScenario& scenario,
                                                         std::size_t m_prime,
                                                         const rng::Stream& stream) {
    if (m_prime < 1) throw std::invalid_argument("simulate_inner_conditional: m' must be >= 1");
    std::vector<InnerPath> out;
    out.reserve(m_prime);
    for (std::size_t j = 0; j < m_prime; ++j) {
        out.push_back(simulate_inner_conditional_one(model, scenario, j, stream));
    }
    return out;
}

// One pooled inner path: the first point is drawn from the marginal law of
// S_{t_{k*+1}} (real-world drift up to tau, risk-neutral over the next step,
// composed into a single lognormal), later steps are risk-neutral. Pooled
// paths carry no dependence on any outer scenario.
inline InnerPath simulate_inner_pooled_one(const MarketModel& model, std::uint64_t index,
                                           const rng::Stream& stream) {
    const std::size_t kstar = model.grid.horizon_index;
    const std::size_t nsteps = model.grid.steps() - kstar;
    InnerPath path;
    path.d = model.d;
    path.seed_tag = index;
    path.path.resize(model.d * nsteps);
    rng::Sequence seq = stream.substream(index);
    std::vector<double> logp(model.d);
    std::vector<double> z(model.d);
    const double tau = model.grid.tau();
    const double dt1 = model.grid.dt(kstar + 1);
    const double span = tau + dt1;
    const double sqspan = std::sqrt(span);
    detail::draw_normals(seq, z);
    for (std::size_t i = 0; i < model.d; ++i) {
        const double a2 = model.asset_variance(i);
        double diffusion = 0.0;
        for (std::size_t j = 0; j <= i; ++j) diffusion += model.vol_at(i, j) * z[j];
        logp[i] = std::log(model.s0[i]) + (model.mu - 0.5 * a2) * tau +
                  (model.r - 0.5 * a2) * dt1 + sqspan * diffusion;
        path.path[i] = std::exp(logp[i]);
    }
    for (std::size_t k = kstar + 2; k <= model.grid.steps(); ++k) {
        detail::draw_normals(seq, z);
        detail::gbm_step(model, model.r, model.grid.dt(k), z, logp);
        for (std::size_t i = 0; i < model.d; ++i) {
            path.path[(k - kstar - 1) * model.d + i] = std::exp(logp[i]);
        }
    }
    return path;
}

inline std::vector<InnerPath> simulate_inner_pooled(const MarketModel& model, std::size_t m,
                                                    const rng::Stream& stream) {
    if (m < 1) throw std::invalid_argument("simulate_inner_pooled: m must be >= 1");
    std::vector<InnerPath> out;
    out.reserve(m);
    for (std::size_t j = 0; j < m; ++j) out.push_back(simulate_inner_pooled_one(model, j, stream));
    return out;
}

}  // namespace nestedrisk

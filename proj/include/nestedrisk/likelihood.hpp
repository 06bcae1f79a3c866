#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "nestedrisk/math.hpp"
#include "nestedrisk/model.hpp"

namespace nestedrisk {

/*
 * Ratio of the conditional transition density f(S_{t_{k*+1}} | S_{t_{k*}})
 * to the pooled sampling density f_tilde(S_{t_{k*+1}}). Both laws are
 * lognormal with the same loading matrix, so the price Jacobians and the
 * determinant of the loading cancel and the log ratio reduces to two
 * quadratic forms in whitened coordinates:
 *
 *   log LR = q_m / (2 (tau+dt)) + d/2 log((tau+dt)/dt) - q_c / (2 dt),
 *
 * where q_c = |u - w|^2, q_m = |u - p|^2, u = V^-1 log y, w = V^-1 (log x +
 * conditional shift), p = V^-1 (marginal mean) and V is the lower-triangular
 * volatility. The value depends only on the scenario's time-tau prices and
 * the inner path's first point; u and w can be prepared once per path and
 * reused across the whole n x m grid at O(d) per pair.
 */
class LikelihoodRatioEvaluator {
public:
    struct InnerProjection {
        std::vector<double> u;  // whitened log first point
        double log_base = 0.0;  // q_m / (2 span) + d/2 log(span/dt)
    };

    struct ScenarioProjection {
        std::vector<double> w;  // whitened conditional mean
    };

    explicit LikelihoodRatioEvaluator(const MarketModel& model)
        : d_(model.d), vol_(model.vol) {
        model.validate();
        const std::size_t kstar = model.grid.horizon_index;
        dt_ = model.grid.dt(kstar + 1);
        span_ = model.grid.tau() + dt_;
        log_det_term_ = 0.5 * static_cast<double>(d_) * std::log(span_ / dt_);
        cond_shift_.resize(d_);
        std::vector<double> marginal_mean(d_);
        for (std::size_t i = 0; i < d_; ++i) {
            const double a2 = model.asset_variance(i);
            cond_shift_[i] = (model.r - 0.5 * a2) * dt_;
            marginal_mean[i] = std::log(model.s0[i]) + (model.mu - 0.5 * a2) * model.grid.tau() +
                               (model.r - 0.5 * a2) * dt_;
        }
        marginal_white_ = whiten(marginal_mean);
        for (double v : marginal_white_) {
            if (!std::isfinite(v)) throw NumericError("likelihood: degenerate covariance");
        }
    }

    std::size_t dimension() const { return d_; }

    InnerProjection prepare_inner(std::span<const double> first_point) const {
        std::vector<double> z(d_);
        for (std::size_t i = 0; i < d_; ++i) z[i] = std::log(first_point[i]);
        InnerProjection proj;
        proj.u = whiten(z);
        double qm = 0.0;
        for (std::size_t i = 0; i < d_; ++i) {
            const double dlt = proj.u[i] - marginal_white_[i];
            qm += dlt * dlt;
        }
        proj.log_base = 0.5 * qm / span_ + log_det_term_;
        return proj;
    }

    ScenarioProjection prepare_scenario(std::span<const double> last_prices) const {
        std::vector<double> mean(d_);
        for (std::size_t i = 0; i < d_; ++i) mean[i] = std::log(last_prices[i]) + cond_shift_[i];
        return ScenarioProjection{whiten(mean)};
    }

    double log_ratio(const ScenarioProjection& scen, const InnerProjection& inner) const {
        double qc = 0.0;
        for (std::size_t i = 0; i < d_; ++i) {
            const double dlt = inner.u[i] - scen.w[i];
            qc += dlt * dlt;
        }
        return inner.log_base - 0.5 * qc / dt_;
    }

    double inv_dt() const { return 1.0 / dt_; }

private:
    // Forward substitution against the lower-triangular volatility.
    std::vector<double> whiten(std::span<const double> v) const {
        std::vector<double> u(d_);
        for (std::size_t i = 0; i < d_; ++i) {
            double acc = v[i];
            for (std::size_t j = 0; j < i; ++j) acc -= vol_[i * d_ + j] * u[j];
            u[i] = acc / vol_[i * d_ + i];
        }
        return u;
    }

    std::size_t d_;
    std::vector<double> vol_;
    double dt_ = 0.0;
    double span_ = 0.0;
    double log_det_term_ = 0.0;
    std::vector<double> cond_shift_;
    std::vector<double> marginal_white_;
};

inline double log_likelihood_ratio(const LikelihoodRatioEvaluator& eval,
                                   const OuterScenario& scenario, const InnerPath& inner) {
    const auto sp = eval.prepare_scenario(scenario.last_prices());
    const auto ip = eval.prepare_inner(inner.first_point());
    const double value = eval.log_ratio(sp, ip);
    if (!std::isfinite(value)) throw NumericError("likelihood: non-finite log ratio");
    return value;
}

// Grand mean of exp(log LR) over all scenario/path pairs; close to 1 when the
// sampling density integrates the conditional transition correctly.
inline double mean_ratio_check(const LikelihoodRatioEvaluator& eval,
                               std::span<const OuterScenario> scenarios,
                               std::span<const InnerPath> inners) {
    if (scenarios.empty() || inners.empty()) {
        throw std::invalid_argument("mean_ratio_check: empty inputs");
    }
    std::vector<LikelihoodRatioEvaluator::InnerProjection> prepared;
    prepared.reserve(inners.size());
    for (const auto& y : inners) prepared.push_back(eval.prepare_inner(y.first_point()));
    std::vector<double> per_scenario(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const auto sp = eval.prepare_scenario(scenarios[i].last_prices());
        double acc = 0.0;
        for (const auto& ip : prepared) acc += std::exp(eval.log_ratio(sp, ip));
        per_scenario[i] = acc / static_cast<double>(inners.size());
    }
    return mean_of(per_scenario);
}

}  // namespace nestedrisk

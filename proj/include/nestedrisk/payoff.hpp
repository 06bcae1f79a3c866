#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestedrisk/math.hpp"
#include "nestedrisk/model.hpp"

namespace nestedrisk {

enum class InstrumentKind { EuropeanCall, GeometricAsianCall, UpOutCall, DownOutCall };

inline const char* instrument_kind_name(InstrumentKind k) {
    switch (k) {
        case InstrumentKind::EuropeanCall: return "european_call";
        case InstrumentKind::GeometricAsianCall: return "geometric_asian_call";
        case InstrumentKind::UpOutCall: return "up_out_call";
        case InstrumentKind::DownOutCall: return "down_out_call";
    }
    return "?";
}

struct Instrument {
    InstrumentKind kind = InstrumentKind::EuropeanCall;
    std::size_t asset = 0;
    double strike = 0.0;
    double barrier = 0.0;          // knock-out level, barrier kinds only
    double quantity = 1.0;         // signed position size
    std::size_t maturity_index = 0;  // grid index of expiry; 0 means "last"
    std::size_t monitor_stride = 1;  // Asian averaging grid: every stride-th step

    bool is_barrier() const {
        return kind == InstrumentKind::UpOutCall || kind == InstrumentKind::DownOutCall;
    }
};

enum class BarrierDirection { Up, Down };

// Probability that a continuously monitored GBM segment between prices a and
// b stays on the safe side of the barrier, given the endpoints (Brownian
// bridge on the log scale). Zero when an endpoint breaches.
inline double bridge_survival(double a, double b, double barrier, double sigma, double dt,
                              BarrierDirection direction) {
    if (!(a > 0.0 && b > 0.0 && dt > 0.0)) {
        throw std::invalid_argument("bridge_survival: need positive endpoints and dt");
    }
    double ga, gb;
    if (direction == BarrierDirection::Up) {
        if (a >= barrier || b >= barrier) return 0.0;
        ga = std::log(barrier / a);
        gb = std::log(barrier / b);
    } else {
        if (a <= barrier || b <= barrier) return 0.0;
        ga = std::log(a / barrier);
        gb = std::log(b / barrier);
    }
    const double t = 2.0 * ga * gb / (sigma * sigma * dt);
    if (t > 40.0) return 1.0;  // exp underflows well before this
    return 1.0 - std::exp(-t);
}

namespace detail {

// E[e^W 1{lo <= W <= hi}] and P(lo <= W <= hi) for W ~ N(nu*h, s^2), s = a*sqrt(h).
inline double partial_exp_moment(double lo, double hi, double nu_h, double s) {
    const double scale = std::exp(nu_h + 0.5 * s * s);
    const double zhi = std::isinf(hi) ? 1.0 : normal_cdf((hi - nu_h - s * s) / s);
    const double zlo = std::isinf(lo) ? 0.0 : normal_cdf((lo - nu_h - s * s) / s);
    return scale * (zhi - zlo);
}

inline double partial_prob(double lo, double hi, double nu_h, double s) {
    const double zhi = std::isinf(hi) ? 1.0 : normal_cdf((hi - nu_h) / s);
    const double zlo = std::isinf(lo) ? 0.0 : normal_cdf((lo - nu_h) / s);
    return zhi - zlo;
}

// Undiscounted E[(S_h - K)^+] under the risk-neutral measure.
inline double call_expectation(double spot, double strike, double r, double a, double h) {
    if (h <= 0.0) return std::max(spot - strike, 0.0);
    const double s = a * std::sqrt(h);
    if (s < 1e-12) return std::max(spot * std::exp(r * h) - strike, 0.0);
    const double d1 = (std::log(spot / strike) + (r + 0.5 * a * a) * h) / s;
    return spot * std::exp(r * h) * normal_cdf(d1) - strike * normal_cdf(d1 - s);
}

// Undiscounted E[(S_h - K)^+ 1{path stays below U}] for a live up-and-out
// position, by integrating the reflected terminal/running-max density.
inline double up_out_call_expectation(double spot, double strike, double barrier, double r,
                                      double a, double h) {
    if (spot >= barrier || strike >= barrier) return 0.0;
    if (h <= 0.0) return std::max(spot - strike, 0.0);
    const double s = a * std::sqrt(h);
    if (s < 1e-12) {
        const double st = spot * std::exp(r * h);
        return (std::max(spot, st) < barrier) ? std::max(st - strike, 0.0) : 0.0;
    }
    const double nu = r - 0.5 * a * a;
    const double nu_h = nu * h;
    const double b = std::log(barrier / spot);
    const double k = std::log(strike / spot);
    const double refl = std::exp(2.0 * nu * b / (a * a));
    const double direct = spot * partial_exp_moment(k, b, nu_h, s) -
                          strike * partial_prob(k, b, nu_h, s);
    const double mirrored = spot * std::exp(2.0 * b) *
                                partial_exp_moment(k - 2.0 * b, -b, nu_h, s) -
                            strike * partial_prob(k - 2.0 * b, -b, nu_h, s);
    return std::max(direct - refl * mirrored, 0.0);
}

inline double down_out_call_expectation(double spot, double strike, double barrier, double r,
                                        double a, double h) {
    if (spot <= barrier) return 0.0;
    if (h <= 0.0) return std::max(spot - strike, 0.0);
    const double s = a * std::sqrt(h);
    if (s < 1e-12) {
        const double st = spot * std::exp(r * h);
        return (std::min(spot, st) > barrier) ? std::max(st - strike, 0.0) : 0.0;
    }
    const double nu = r - 0.5 * a * a;
    const double nu_h = nu * h;
    const double b = std::log(barrier / spot);  // negative
    const double k = std::log(strike / spot);
    const double lo = std::max(k, b);
    const double inf = std::numeric_limits<double>::infinity();
    const double refl = std::exp(2.0 * nu * b / (a * a));
    const double direct = spot * partial_exp_moment(lo, inf, nu_h, s) -
                          strike * partial_prob(lo, inf, nu_h, s);
    const double mirrored = spot * std::exp(2.0 * b) *
                                partial_exp_moment(lo - 2.0 * b, inf, nu_h, s) -
                            strike * partial_prob(lo - 2.0 * b, inf, nu_h, s);
    return std::max(direct - refl * mirrored, 0.0);
}

// Price lookup over (s0, outer prefix, inner continuation).
struct SplicedPath {
    const MarketModel* model;
    const OuterScenario* outer;   // may be null when only the prefix matters
    const InnerPath* inner;       // may be null

    double price(std::size_t step, std::size_t asset) const {
        if (step == 0) return model->s0[asset];
        const std::size_t kstar = model->grid.horizon_index;
        if (step <= kstar) return outer->path[(step - 1) * model->d + asset];
        return inner->path[(step - kstar - 1) * model->d + asset];
    }
};

}  // namespace detail

struct Portfolio {
    MarketModel model;
    std::vector<Instrument> instruments;
    double v0 = 0.0;  // analytic time-0 portfolio value (time-0 currency)

    std::size_t resolved_maturity(const Instrument& inst) const {
        return inst.maturity_index == 0 ? model.grid.steps() : inst.maturity_index;
    }

    void validate() const {
        model.validate();
        if (instruments.empty()) throw std::invalid_argument("portfolio: needs at least one instrument");
        for (std::size_t idx = 0; idx < instruments.size(); ++idx) {
            const auto& inst = instruments[idx];
            const std::string where = "portfolio.instruments[" + std::to_string(idx) + "]";
            if (inst.asset >= model.d) throw std::invalid_argument(where + ": asset index out of range");
            if (!(inst.strike > 0.0)) throw std::invalid_argument(where + ": strike must be > 0");
            const std::size_t mat = resolved_maturity(inst);
            if (mat < 1 || mat > model.grid.steps()) {
                throw std::invalid_argument(where + ": maturity_index out of range");
            }
            if (inst.is_barrier()) {
                if (!(inst.barrier > 0.0)) throw std::invalid_argument(where + ": barrier must be > 0");
                if (inst.monitor_stride != 1) {
                    throw std::invalid_argument(where + ": barrier instruments monitor every step");
                }
            }
            if (inst.kind == InstrumentKind::GeometricAsianCall) {
                if (inst.monitor_stride < 1) throw std::invalid_argument(where + ": monitor_stride must be >= 1");
                if (mat % inst.monitor_stride != 0) {
                    throw std::invalid_argument(where +
                        ": maturity must be a multiple of monitor_stride (grid must refine the averaging grid)");
                }
            }
        }
    }
};

namespace detail {

// Time-0 discounted analytic value of one instrument given the path up to
// grid index k (conditional expectation over the remaining risk-neutral
// evolution; continuous barrier monitoring, exact under this model).
inline double analytic_instrument_value(const Portfolio& p, const Instrument& inst,
                                        const SplicedPath& path, std::size_t k) {
    const auto& model = p.model;
    const std::size_t mat = p.resolved_maturity(inst);
    const double a = model.asset_vol(inst.asset);
    const double t_mat = model.grid.times[mat];
    const double discount = std::exp(-model.r * t_mat);
    const std::size_t upto = std::min(k, mat);

    switch (inst.kind) {
        case InstrumentKind::EuropeanCall: {
            const double spot = path.price(upto, inst.asset);
            const double h = t_mat - model.grid.times[upto];
            return discount * call_expectation(spot, inst.strike, model.r, a, h);
        }
        case InstrumentKind::UpOutCall:
        case InstrumentKind::DownOutCall: {
            const bool up = inst.kind == InstrumentKind::UpOutCall;
            const auto dir = up ? BarrierDirection::Up : BarrierDirection::Down;
            double surv = 1.0;
            for (std::size_t step = 1; step <= upto && surv > 0.0; ++step) {
                surv *= bridge_survival(path.price(step - 1, inst.asset),
                                        path.price(step, inst.asset), inst.barrier, a,
                                        model.grid.dt(step), dir);
            }
            if (surv <= 0.0) return 0.0;
            const double spot = path.price(upto, inst.asset);
            if (mat <= k) return discount * surv * std::max(spot - inst.strike, 0.0);
            const double h = t_mat - model.grid.times[upto];
            const double rest = up ? up_out_call_expectation(spot, inst.strike, inst.barrier,
                                                             model.r, a, h)
                                   : down_out_call_expectation(spot, inst.strike, inst.barrier,
                                                               model.r, a, h);
            return discount * surv * rest;
        }
        case InstrumentKind::GeometricAsianCall: {
            const std::size_t count = mat / inst.monitor_stride;
            double realized_logsum = 0.0;
            std::vector<double> future;  // time gaps of unrealized fixings
            for (std::size_t idx = 1; idx <= count; ++idx) {
                const std::size_t step = idx * inst.monitor_stride;
                if (step <= k) {
                    realized_logsum += std::log(path.price(step, inst.asset));
                } else {
                    future.push_back(model.grid.times[step] - model.grid.times[k]);
                }
            }
            const double inv_n = 1.0 / static_cast<double>(count);
            if (future.empty()) {
                return discount * std::max(std::exp(realized_logsum * inv_n) - inst.strike, 0.0);
            }
            const double spot_log = std::log(path.price(k, inst.asset));
            const double nu = model.r - 0.5 * a * a;
            const std::size_t n2 = future.size();
            double gap_sum = 0.0;
            double min_sum = 0.0;  // sum over pairs of min(gap_i, gap_j); gaps ascend
            for (std::size_t i = 0; i < n2; ++i) {
                gap_sum += future[i];
                min_sum += future[i] * static_cast<double>(2 * (n2 - 1 - i) + 1);
            }
            const double mean = (realized_logsum + static_cast<double>(n2) * spot_log +
                                 nu * gap_sum) * inv_n;
            const double var = a * a * min_sum * inv_n * inv_n;
            const double sg = std::sqrt(var);
            if (sg < 1e-12) {
                return discount * std::max(std::exp(mean) - inst.strike, 0.0);
            }
            const double d2 = (mean - std::log(inst.strike)) / sg;
            const double expectation = std::exp(mean + 0.5 * var) * normal_cdf(d2 + sg) -
                                       inst.strike * normal_cdf(d2);
            return discount * expectation;
        }
    }
    return 0.0;
}

}  // namespace detail

// Time-0 discounted analytic portfolio value given the path up to grid index
// k; k = 0 gives the current value V_0.
inline double analytic_portfolio_value(const Portfolio& p, const OuterScenario* prefix,
                                       std::size_t k) {
    detail::SplicedPath path{&p.model, prefix, nullptr};
    double total = 0.0;
    for (const auto& inst : p.instruments) {
        total += inst.quantity * detail::analytic_instrument_value(p, inst, path, k);
    }
    return total;
}

inline Portfolio make_portfolio(MarketModel model, std::vector<Instrument> instruments) {
    Portfolio p{std::move(model), std::move(instruments), 0.0};
    p.validate();
    p.v0 = analytic_portfolio_value(p, nullptr, 0);
    return p;
}

// Discounted portfolio payoff V_T(X, Y): the sum over instruments of
// quantity x e^{-r T_i} x payoff on the spliced path, with knock-out payoffs
// weighted by the product of per-interval bridge survival probabilities.
inline double discounted_payoff(const Portfolio& p, const OuterScenario& x, const InnerPath& y) {
    const auto& model = p.model;
    detail::SplicedPath path{&model, &x, &y};
    double total = 0.0;
    for (const auto& inst : p.instruments) {
        const std::size_t mat = p.resolved_maturity(inst);
        const double discount = std::exp(-model.r * model.grid.times[mat]);
        const double a = model.asset_vol(inst.asset);
        double payoff = 0.0;
        switch (inst.kind) {
            case InstrumentKind::EuropeanCall:
                payoff = std::max(path.price(mat, inst.asset) - inst.strike, 0.0);
                break;
            case InstrumentKind::UpOutCall:
            case InstrumentKind::DownOutCall: {
                const bool up = inst.kind == InstrumentKind::UpOutCall;
                const auto dir = up ? BarrierDirection::Up : BarrierDirection::Down;
                double surv = 1.0;
                for (std::size_t step = 1; step <= mat && surv > 0.0; ++step) {
                    surv *= bridge_survival(path.price(step - 1, inst.asset),
                                            path.price(step, inst.asset), inst.barrier, a,
                                            model.grid.dt(step), dir);
                }
                payoff = surv * std::max(path.price(mat, inst.asset) - inst.strike, 0.0);
                break;
            }
            case InstrumentKind::GeometricAsianCall: {
                const std::size_t count = mat / inst.monitor_stride;
                double logsum = 0.0;
                for (std::size_t idx = 1; idx <= count; ++idx) {
                    logsum += std::log(path.price(idx * inst.monitor_stride, inst.asset));
                }
                payoff = std::max(std::exp(logsum / static_cast<double>(count)) - inst.strike, 0.0);
                break;
            }
        }
        total += inst.quantity * discount * payoff;
    }
    return total;
}

inline double loss(const Portfolio& p, const OuterScenario& x, const InnerPath& y) {
    return p.v0 - discounted_payoff(p, x, y);
}

// Exact L(X) = V_0 - V_tau(X) in time-0 currency.
inline double analytic_loss(const Portfolio& p, const OuterScenario& x) {
    return p.v0 - analytic_portfolio_value(p, &x, p.model.grid.horizon_index);
}

/*
 * Split evaluation of H(X, Y) for the pooled estimator: everything that
 * depends on the scenario alone or on the inner path alone is summarized
 * once per path, and the per-pair combine touches only those summaries.
 * Instruments sharing an (asset, barrier, direction) or an Asian averaging
 * grid collapse into groups so the combine cost stays a few dozen flops at
 * any portfolio size. The junction interval [t_{k*}, t_{k*+1}] straddles the
 * scenario's last point and the inner path's first point, so its bridge
 * survival is the one genuinely pairwise barrier term.
 *
 * Summary layouts (flat doubles, see *_summary_size):
 *   scenario: [const payoff of already-matured positions][per barrier group:
 *             prefix survival, log gap to barrier][per Asian group: realized
 *             log sum]
 *   inner:    [European core sum][per barrier group: survival-weighted payoff
 *             sum, log gap][per Asian group: continuation log sum]
 */
class PortfolioPairEvaluator {
public:
    explicit PortfolioPairEvaluator(const Portfolio& p) : p_(&p) {
        const auto& model = p.model;
        kstar_ = model.grid.horizon_index;
        dt_junction_ = model.grid.dt(kstar_ + 1);
        for (std::size_t idx = 0; idx < p.instruments.size(); ++idx) {
            const auto& inst = p.instruments[idx];
            const std::size_t mat = p.resolved_maturity(inst);
            if (mat <= kstar_) {
                matured_.push_back(idx);
                continue;
            }
            const double factor = inst.quantity * std::exp(-model.r * model.grid.times[mat]);
            switch (inst.kind) {
                case InstrumentKind::EuropeanCall:
                    europeans_.push_back({idx, mat, factor, inst.strike});
                    break;
                case InstrumentKind::UpOutCall:
                case InstrumentKind::DownOutCall: {
                    const bool up = inst.kind == InstrumentKind::UpOutCall;
                    const std::size_t g = find_barrier_group(inst.asset, inst.barrier, up, mat);
                    barrier_groups_[g].members.push_back({idx, mat, factor, inst.strike});
                    break;
                }
                case InstrumentKind::GeometricAsianCall: {
                    const std::size_t g = find_asian_group(inst.asset, inst.monitor_stride, mat);
                    asian_groups_[g].members.push_back({idx, mat, factor, inst.strike});
                    break;
                }
            }
        }
    }

    std::size_t scenario_summary_size() const {
        return 1 + 2 * barrier_groups_.size() + asian_groups_.size();
    }
    std::size_t inner_summary_size() const {
        return 1 + 2 * barrier_groups_.size() + asian_groups_.size();
    }

    void summarize_scenario(const OuterScenario& x, std::span<double> out) const {
        const auto& model = p_->model;
        detail::SplicedPath path{&model, &x, nullptr};
        double constant = 0.0;
        for (std::size_t idx : matured_) {
            constant += p_->instruments[idx].quantity *
                        detail::analytic_instrument_value(*p_, p_->instruments[idx], path, kstar_);
        }
        out[0] = constant;
        std::size_t pos = 1;
        for (const auto& g : barrier_groups_) {
            const double a = model.asset_vol(g.asset);
            const auto dir = g.up ? BarrierDirection::Up : BarrierDirection::Down;
            double surv = 1.0;
            for (std::size_t step = 1; step <= kstar_ && surv > 0.0; ++step) {
                surv *= bridge_survival(path.price(step - 1, g.asset), path.price(step, g.asset),
                                        g.barrier, a, model.grid.dt(step), dir);
            }
            const double last = path.price(kstar_, g.asset);
            const double gap = g.up ? std::log(g.barrier / last) : std::log(last / g.barrier);
            out[pos++] = surv;
            out[pos++] = gap;
        }
        for (const auto& g : asian_groups_) {
            double logsum = 0.0;
            for (std::size_t idx = 1; idx * g.stride <= kstar_; ++idx) {
                logsum += std::log(path.price(idx * g.stride, g.asset));
            }
            out[pos++] = logsum;
        }
    }

    void summarize_inner(const InnerPath& y, std::span<double> out) const {
        const auto& model = p_->model;
        double eur = 0.0;
        for (const auto& leg : europeans_) {
            const std::size_t step = leg.maturity - kstar_ - 1;
            const std::size_t asset = p_->instruments[leg.index].asset;
            eur += leg.factor * std::max(y.path[step * model.d + asset] - leg.strike, 0.0);
        }
        out[0] = eur;
        std::size_t pos = 1;
        for (const auto& g : barrier_groups_) {
            const double a = model.asset_vol(g.asset);
            const auto dir = g.up ? BarrierDirection::Up : BarrierDirection::Down;
            const std::size_t group_mat = g.members.front().maturity;
            double surv = 1.0;
            for (std::size_t step = kstar_ + 2; step <= group_mat && surv > 0.0; ++step) {
                surv *= bridge_survival(y.path[(step - kstar_ - 2) * model.d + g.asset],
                                        y.path[(step - kstar_ - 1) * model.d + g.asset],
                                        g.barrier, a, model.grid.dt(step), dir);
            }
            double core = 0.0;
            if (surv > 0.0) {
                for (const auto& leg : g.members) {
                    const std::size_t step = leg.maturity - kstar_ - 1;
                    core += leg.factor *
                            std::max(y.path[step * model.d + g.asset] - leg.strike, 0.0);
                }
                core *= surv;
            }
            const double first = y.path[g.asset];
            const double gap = g.up ? std::log(g.barrier / first) : std::log(first / g.barrier);
            out[pos++] = core;
            out[pos++] = gap;
        }
        for (const auto& g : asian_groups_) {
            double logsum = 0.0;
            const std::size_t group_mat = g.members.front().maturity;
            for (std::size_t idx = 1; idx * g.stride <= group_mat; ++idx) {
                const std::size_t step = idx * g.stride;
                if (step > kstar_) logsum += std::log(y.path[(step - kstar_ - 1) * model.d + g.asset]);
            }
            out[pos++] = logsum;
        }
    }

    // Discounted payoff V_T for one (scenario, inner) pair from summaries.
    double pair_discounted_payoff(const double* sc, const double* in) const {
        double total = sc[0] + in[0];
        std::size_t pos = 1;
        for (const auto& g : barrier_groups_) {
            const double core = in[pos];
            if (core != 0.0) {
                const double surv = sc[pos];
                if (surv != 0.0) {
                    const double gx = sc[pos + 1];
                    const double gy = in[pos + 1];
                    double junction = 0.0;
                    if (gx > 0.0 && gy > 0.0) {
                        const double t = g.junction_coef * gx * gy;
                        junction = (t > 40.0) ? 1.0 : 1.0 - std::exp(-t);
                    }
                    total += surv * junction * core;
                }
            }
            pos += 2;
        }
        for (const auto& g : asian_groups_) {
            const double gmean = std::exp((sc[pos] + in[pos]) * g.inv_count);
            for (const auto& leg : g.members) {
                const double pay = gmean - leg.strike;
                if (pay > 0.0) total += leg.factor * pay;
            }
            ++pos;
        }
        return total;
    }

private:
    struct Leg {
        std::size_t index;
        std::size_t maturity;
        double factor;  // quantity * discount to time 0
        double strike;
    };
    struct BarrierGroup {
        std::size_t asset;
        double barrier;
        bool up;
        double junction_coef;
        std::vector<Leg> members;
    };
    struct AsianGroup {
        std::size_t asset;
        std::size_t stride;
        double inv_count;
        std::vector<Leg> members;
    };

    std::size_t find_barrier_group(std::size_t asset, double barrier, bool up, std::size_t mat) {
        for (std::size_t g = 0; g < barrier_groups_.size(); ++g) {
            const auto& bg = barrier_groups_[g];
            if (bg.asset == asset && bg.barrier == barrier && bg.up == up &&
                bg.members.front().maturity == mat) {
                return g;
            }
        }
        const double a2 = p_->model.asset_variance(asset);
        barrier_groups_.push_back({asset, barrier, up, 2.0 / (a2 * dt_junction_), {}});
        barrier_groups_.back().members.reserve(4);
        // the maturity key lives in the first member, appended by the caller
        return barrier_groups_.size() - 1;
    }

    std::size_t find_asian_group(std::size_t asset, std::size_t stride, std::size_t mat) {
        for (std::size_t g = 0; g < asian_groups_.size(); ++g) {
            const auto& ag = asian_groups_[g];
            if (ag.asset == asset && ag.stride == stride && ag.members.front().maturity == mat) {
                return g;
            }
        }
        asian_groups_.push_back({asset, stride, 1.0 / static_cast<double>(mat / stride), {}});
        return asian_groups_.size() - 1;
    }

    const Portfolio* p_;
    std::size_t kstar_ = 0;
    double dt_junction_ = 0.0;
    std::vector<std::size_t> matured_;
    std::vector<Leg> europeans_;
    std::vector<BarrierGroup> barrier_groups_;
    std::vector<AsianGroup> asian_groups_;
};

}  // namespace nestedrisk

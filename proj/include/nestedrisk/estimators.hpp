#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "nestedrisk/likelihood.hpp"
#include "nestedrisk/math.hpp"
#include "nestedrisk/model.hpp"
#include "nestedrisk/parallel.hpp"
#include "nestedrisk/payoff.hpp"
#include "nestedrisk/riskfn.hpp"
#include "nestedrisk/rng.hpp"

namespace nestedrisk {

struct EstimatorStreams {
    rng::Stream outer;
    rng::Stream inner;
};

inline EstimatorStreams make_estimation_streams(std::uint64_t seed, std::uint64_t replicate = 0) {
    return {rng::stream_for(seed, rng::Purpose::OuterScenarios, replicate),
            rng::stream_for(seed, rng::Purpose::InnerPooled, replicate)};
}

inline EstimatorStreams make_conditional_streams(std::uint64_t seed, std::uint64_t replicate = 0) {
    return {rng::stream_for(seed, rng::Purpose::OuterScenarios, replicate),
            rng::stream_for(seed, rng::Purpose::InnerConditional, replicate)};
}

// Bandwidth schedule for the smoothed-indicator variance estimator:
// eps = scale * m^{-1/6}. With m = n this gives m eps^5 -> infinity and
// n eps^2 -> infinity, which is what the consistency of the estimator needs.
inline double epsilon_schedule(std::size_t m, std::size_t n, double scale) {
    if (m < 2 || n < 2) throw std::invalid_argument("epsilon_schedule: m, n must be >= 2");
    if (!(scale > 0.0)) throw std::invalid_argument("epsilon_schedule: scale must be > 0");
    return scale * std::pow(static_cast<double>(m), -1.0 / 6.0);
}

struct GnsOptions {
    unsigned threads = 0;                               // 0: use default_thread_count()
    std::size_t cache_budget_bytes = std::size_t(1) << 30;  // pair cache limit
    double epsilon_scale = 0.0;                         // 0: sample std of loss estimates
};

struct GnsDiagnostics {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t inner_simulations = 0;   // m pooled paths
    std::size_t payoff_evaluations = 0;  // n * m weighted payoff terms
    double max_likelihood_ratio = 0.0;
    double min_effective_sample_size = 0.0;  // min over scenarios of (sum w)^2 / sum w^2
    bool pair_cache_used = false;
    double seconds = 0.0;
};

struct GnsReport {
    RiskFunction risk;
    double rho_hat = 0.0;
    double sigma1_sq_hat = 0.0;
    double sigma2_sq_hat = 0.0;
    double sigma_mn_sq_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double alpha = 0.1;
    std::optional<double> epsilon_used;  // indicator kind only
    GnsDiagnostics diagnostics;
};

namespace detail {

/*
 * The conceptual n x m array Hhat_ij = H(X_i, Y_j) * LR(X_i, Y_j), held as
 * per-path summaries plus (when it fits the memory budget) a materialized
 * value cache. Row means give the loss estimates; the column statistics the
 * variance estimator needs come from a second pass that either re-reads the
 * cache or recomputes pairs from the summaries.
 */
class LossMatrix {
public:
    LossMatrix(const Portfolio& portfolio, std::size_t n, std::size_t m,
               const GnsOptions& options)
        : p_(&portfolio),
          lr_(portfolio.model),
          pairs_(portfolio),
          n_(n),
          m_(m),
          threads_(options.threads == 0 ? default_thread_count() : options.threads) {
        d_ = portfolio.model.d;
        sc_size_ = pairs_.scenario_summary_size();
        in_size_ = pairs_.inner_summary_size();
        scen_sum_.resize(n_ * sc_size_);
        scen_w_.resize(n_ * d_);
        inner_sum_.resize(m_ * in_size_);
        inner_u_.resize(m_ * d_);
        inner_base_.resize(m_);
        use_cache_ = n_ * m_ * sizeof(double) <= options.cache_budget_bytes;
        if (use_cache_) cache_.resize(n_ * m_);
    }

    void load_scenario(std::size_t i, const OuterScenario& x) {
        pairs_.summarize_scenario(x, {scen_sum_.data() + i * sc_size_, sc_size_});
        const auto proj = lr_.prepare_scenario(x.last_prices());
        std::copy(proj.w.begin(), proj.w.end(), scen_w_.begin() + i * d_);
    }

    void load_inner(std::size_t j, const InnerPath& y) {
        pairs_.summarize_inner(y, {inner_sum_.data() + j * in_size_, in_size_});
        const auto proj = lr_.prepare_inner(y.first_point());
        std::copy(proj.u.begin(), proj.u.end(), inner_u_.begin() + j * d_);
        inner_base_[j] = proj.log_base;
    }

    // First pass: row means L_{m,i} plus weight diagnostics.
    void accumulate_rows() {
        loss_est_.assign(n_, 0.0);
        std::vector<double> ess(n_, 0.0);
        const std::size_t row_block = 16;
        const std::size_t nblocks = (n_ + row_block - 1) / row_block;
        std::vector<double> block_max(nblocks, 0.0);
        const double half_inv_dt = 0.5 * lr_.inv_dt();
        const double v0 = p_->v0;
        for_blocks(n_, row_block, threads_, [&](std::size_t b, std::size_t lo, std::size_t hi) {
            double bmax = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                const double* wi = scen_w_.data() + i * d_;
                const double* sci = scen_sum_.data() + i * sc_size_;
                double* row = use_cache_ ? cache_.data() + i * m_ : nullptr;
                double rowsum = 0.0, wsum = 0.0, w2sum = 0.0, rmax = 0.0;
                if (d_ == 1) {
                    const double w0 = wi[0];
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double diff = inner_u_[j] - w0;
                        const double w = std::exp(inner_base_[j] - half_inv_dt * diff * diff);
                        const double vt = pairs_.pair_discounted_payoff(
                            sci, inner_sum_.data() + j * in_size_);
                        const double hh = (v0 - vt) * w;
                        rowsum += hh;
                        wsum += w;
                        w2sum += w * w;
                        rmax = std::max(rmax, w);
                        if (row) row[j] = hh;
                    }
                } else {
                    for (std::size_t j = 0; j < m_; ++j) {
                        const double* uj = inner_u_.data() + j * d_;
                        double q = 0.0;
                        for (std::size_t t = 0; t < d_; ++t) {
                            const double diff = uj[t] - wi[t];
                            q += diff * diff;
                        }
                        const double w = std::exp(inner_base_[j] - half_inv_dt * q);
                        const double vt = pairs_.pair_discounted_payoff(
                            sci, inner_sum_.data() + j * in_size_);
                        const double hh = (v0 - vt) * w;
                        rowsum += hh;
                        wsum += w;
                        w2sum += w * w;
                        rmax = std::max(rmax, w);
                        if (row) row[j] = hh;
                    }
                }
                loss_est_[i] = rowsum / static_cast<double>(m_);
                ess[i] = (w2sum > 0.0) ? wsum * wsum / w2sum : 0.0;
                bmax = std::max(bmax, rmax);
            }
            block_max[b] = bmax;
        });
        max_lr_ = 0.0;
        for (double v : block_max) max_lr_ = std::max(max_lr_, v);
        min_ess_ = ess.empty() ? 0.0 : *std::min_element(ess.begin(), ess.end());
        for (std::size_t i = 0; i < n_; ++i) {
            if (!std::isfinite(loss_est_[i])) {
                throw NumericError("gns: non-finite weighted payoff in scenario row " +
                                   std::to_string(i) + " (degenerate likelihood ratio)");
            }
        }
    }

    // Second pass: per-inner-path columns c_j = sum_i weight_i * Hhat_ij for
    // each weight vector, reusing the cache or recomputing pairs.
    std::vector<std::vector<double>> column_sums(
        const std::vector<std::vector<double>>& weight_vectors) const {
        const std::size_t G = weight_vectors.size();
        std::vector<std::vector<double>> cols(G, std::vector<double>(m_, 0.0));
        if (use_cache_) {
            for_blocks(m_, 8192, threads_, [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t i = 0; i < n_; ++i) {
                    const double* row = cache_.data() + i * m_;
                    for (std::size_t g = 0; g < G; ++g) {
                        const double wg = weight_vectors[g][i];
                        if (wg == 0.0) continue;
                        double* cg = cols[g].data();
                        for (std::size_t j = lo; j < hi; ++j) cg[j] += wg * row[j];
                    }
                }
            });
        } else {
            const double half_inv_dt = 0.5 * lr_.inv_dt();
            const double v0 = p_->v0;
            for_blocks(m_, 64, threads_, [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t j = lo; j < hi; ++j) {
                    const double* uj = inner_u_.data() + j * d_;
                    const double base = inner_base_[j];
                    const double* inj = inner_sum_.data() + j * in_size_;
                    std::vector<double> acc(G, 0.0);
                    for (std::size_t i = 0; i < n_; ++i) {
                        const double* wi = scen_w_.data() + i * d_;
                        double q = 0.0;
                        for (std::size_t t = 0; t < d_; ++t) {
                            const double diff = uj[t] - wi[t];
                            q += diff * diff;
                        }
                        const double w = std::exp(base - half_inv_dt * q);
                        const double vt = pairs_.pair_discounted_payoff(
                            scen_sum_.data() + i * sc_size_, inj);
                        const double hh = (v0 - vt) * w;
                        for (std::size_t g = 0; g < G; ++g) acc[g] += weight_vectors[g][i] * hh;
                    }
                    for (std::size_t g = 0; g < G; ++g) cols[g][j] = acc[g];
                }
            });
        }
        return cols;
    }

    std::span<const double> loss_estimates() const { return loss_est_; }
    double max_likelihood_ratio() const { return max_lr_; }
    double min_effective_sample_size() const { return min_ess_; }
    bool cache_used() const { return use_cache_; }
    std::size_t rows() const { return n_; }
    std::size_t cols() const { return m_; }
    unsigned threads() const { return threads_; }

private:
    const Portfolio* p_;
    LikelihoodRatioEvaluator lr_;
    PortfolioPairEvaluator pairs_;
    std::size_t n_, m_, d_, sc_size_, in_size_;
    unsigned threads_;
    bool use_cache_ = false;
    std::vector<double> scen_sum_, scen_w_, inner_sum_, inner_u_, inner_base_;
    std::vector<double> cache_;
    std::vector<double> loss_est_;
    double max_lr_ = 0.0;
    double min_ess_ = 0.0;
};

inline std::vector<GnsReport> gns_reports_from_matrix(LossMatrix& matrix,
                                                      std::span<const RiskFunction> risks,
                                                      double alpha, double epsilon_scale,
                                                      double seconds) {
    const std::size_t n = matrix.rows();
    const std::size_t m = matrix.cols();
    const auto losses = matrix.loss_estimates();
    const double z = normal_inv_cdf(1.0 - alpha / 2.0);

    double eps_scale = epsilon_scale;
    const bool any_indicator = std::any_of(risks.begin(), risks.end(), [](const RiskFunction& g) {
        return g.kind == RiskKind::Indicator;
    });
    if (any_indicator && eps_scale <= 0.0) {
        eps_scale = sample_std(losses);
        if (!(eps_scale > 0.0)) eps_scale = 1.0;  // constant losses: bandwidth is arbitrary
    }
    const double epsilon = any_indicator ? epsilon_schedule(m, n, eps_scale) : 0.0;

    // One weight vector per risk function drives the shared column pass.
    std::vector<std::vector<double>> weights(risks.size(), std::vector<double>(n));
    for (std::size_t g = 0; g < risks.size(); ++g) {
        const auto& risk = risks[g];
        if (risk.kind == RiskKind::Indicator) {
            const SmoothIndicator smooth(epsilon, risk.threshold);
            for (std::size_t i = 0; i < n; ++i) weights[g][i] = smooth.deriv(losses[i]);
        } else {
            for (std::size_t i = 0; i < n; ++i) weights[g][i] = risk.deriv(losses[i]);
        }
    }
    const auto cols = matrix.column_sums(weights);

    std::vector<GnsReport> reports(risks.size());
    std::vector<double> gvals(n), scaled(m);
    for (std::size_t g = 0; g < risks.size(); ++g) {
        const auto& risk = risks[g];
        GnsReport& rep = reports[g];
        rep.risk = risk;
        rep.alpha = alpha;
        for (std::size_t i = 0; i < n; ++i) gvals[i] = risk.eval(losses[i]);
        rep.rho_hat = mean_of(gvals);
        std::vector<double> gsq(n);
        for (std::size_t i = 0; i < n; ++i) gsq[i] = gvals[i] * gvals[i];
        rep.sigma1_sq_hat = std::max(0.0, mean_of(gsq) - rep.rho_hat * rep.rho_hat);

        for (std::size_t j = 0; j < m; ++j) scaled[j] = cols[g][j] / static_cast<double>(n);
        std::vector<double> sq(m);
        for (std::size_t j = 0; j < m; ++j) sq[j] = scaled[j] * scaled[j];
        const double mean_sq = mean_of(sq);
        if (risk.kind == RiskKind::Indicator) {
            rep.sigma2_sq_hat = mean_sq;
            rep.epsilon_used = epsilon;
        } else {
            const double mean_scaled = mean_of(scaled);
            rep.sigma2_sq_hat = std::max(0.0, mean_sq - mean_scaled * mean_scaled);
        }
        if (!std::isfinite(rep.sigma2_sq_hat)) {
            throw NumericError("gns: non-finite variance estimate (degenerate likelihood ratio)");
        }
        rep.sigma_mn_sq_hat = rep.sigma1_sq_hat / static_cast<double>(n) +
                              rep.sigma2_sq_hat / static_cast<double>(m);
        const double half = z * std::sqrt(rep.sigma_mn_sq_hat);
        rep.ci_lo = rep.rho_hat - half;
        rep.ci_hi = rep.rho_hat + half;
        rep.diagnostics.n = n;
        rep.diagnostics.m = m;
        rep.diagnostics.inner_simulations = m;
        rep.diagnostics.payoff_evaluations = n * m;
        rep.diagnostics.max_likelihood_ratio = matrix.max_likelihood_ratio();
        rep.diagnostics.min_effective_sample_size = matrix.min_effective_sample_size();
        rep.diagnostics.pair_cache_used = matrix.cache_used();
        rep.diagnostics.seconds = seconds;
    }
    return reports;
}

}  // namespace detail

struct GnsResult {
    std::vector<GnsReport> reports;           // one per requested risk function
    std::vector<double> loss_estimates;       // L_{m,i}
};

// Pooled nested estimation: n outer scenarios, one shared set of m inner
// paths recycled across scenarios through likelihood-ratio weights.
inline GnsResult gns_estimate_multi(const Portfolio& portfolio,
                                    std::span<const RiskFunction> risks, std::size_t n,
                                    std::size_t m, double alpha,
                                    const EstimatorStreams& streams,
                                    const GnsOptions& options = {}) {
    if (n < 2 || m < 2) throw std::invalid_argument("gns: n and m must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("gns: alpha must be in (0,1)");
    if (risks.empty()) throw std::invalid_argument("gns: need at least one risk function");
    const auto t0 = std::chrono::steady_clock::now();

    detail::LossMatrix matrix(portfolio, n, m, options);
    const auto& model = portfolio.model;
    parallel_for_each(n, matrix.threads(), [&](std::size_t i) {
        matrix.load_scenario(i, simulate_outer_one(model, i, streams.outer));
    });
    parallel_for_each(m, matrix.threads(), [&](std::size_t j) {
        matrix.load_inner(j, simulate_inner_pooled_one(model, j, streams.inner));
    });
    matrix.accumulate_rows();

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    GnsResult result;
    result.reports = detail::gns_reports_from_matrix(matrix, risks, alpha,
                                                     options.epsilon_scale, seconds);
    const auto le = matrix.loss_estimates();
    result.loss_estimates.assign(le.begin(), le.end());
    return result;
}

inline GnsReport gns_estimate(const Portfolio& portfolio, const RiskFunction& risk,
                              std::size_t n, std::size_t m, double alpha,
                              const EstimatorStreams& streams, const GnsOptions& options = {}) {
    const RiskFunction risks[1] = {risk};
    return gns_estimate_multi(portfolio, risks, n, m, alpha, streams, options).reports[0];
}

// Same estimator over pre-simulated paths. Paths are re-indexed by their seed
// tags before any summation, so the result is invariant (bit for bit) under
// permutations of the input lists.
inline GnsResult gns_estimate_from_paths(const Portfolio& portfolio,
                                         std::span<const RiskFunction> risks,
                                         std::span<const OuterScenario> scenarios,
                                         std::span<const InnerPath> inners, double alpha,
                                         const GnsOptions& options = {}) {
    const std::size_t n = scenarios.size();
    const std::size_t m = inners.size();
    if (n < 2 || m < 2) throw std::invalid_argument("gns: n and m must be >= 2");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::size_t> sidx(n), yidx(m);
    std::iota(sidx.begin(), sidx.end(), 0);
    std::iota(yidx.begin(), yidx.end(), 0);
    std::sort(sidx.begin(), sidx.end(), [&](std::size_t a, std::size_t b) {
        return scenarios[a].seed_tag < scenarios[b].seed_tag;
    });
    std::sort(yidx.begin(), yidx.end(), [&](std::size_t a, std::size_t b) {
        return inners[a].seed_tag < inners[b].seed_tag;
    });

    detail::LossMatrix matrix(portfolio, n, m, options);
    parallel_for_each(n, matrix.threads(), [&](std::size_t i) {
        matrix.load_scenario(i, scenarios[sidx[i]]);
    });
    parallel_for_each(m, matrix.threads(), [&](std::size_t j) {
        matrix.load_inner(j, inners[yidx[j]]);
    });
    matrix.accumulate_rows();

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    GnsResult result;
    result.reports = detail::gns_reports_from_matrix(matrix, risks, alpha,
                                                     options.epsilon_scale, seconds);
    const auto le = matrix.loss_estimates();
    result.loss_estimates.assign(le.begin(), le.end());
    return result;
}

struct SnsResult {
    std::vector<double> rho_hat;             // one per risk function
    std::vector<double> loss_estimates;      // per-scenario inner means
    std::size_t inner_simulations = 0;       // n * m'
    std::size_t payoff_evaluations = 0;
    double seconds = 0.0;
};

// Standard nested simulation: per-scenario conditional inner sampling.
inline SnsResult sns_estimate_multi(const Portfolio& portfolio,
                                    std::span<const RiskFunction> risks, std::size_t n,
                                    std::size_t m_prime, const EstimatorStreams& streams,
                                    unsigned threads = 0) {
    if (n < 1 || m_prime < 1) throw std::invalid_argument("sns: n and m' must be >= 1");
    if (risks.empty()) throw std::invalid_argument("sns: need at least one risk function");
    const auto t0 = std::chrono::steady_clock::now();
    if (threads == 0) threads = default_thread_count();
    const auto& model = portfolio.model;
    const PortfolioPairEvaluator pairs(portfolio);
    const std::size_t sc_size = pairs.scenario_summary_size();
    const std::size_t in_size = pairs.inner_summary_size();
    std::vector<double> loss_bar(n);
    parallel_for_each(n, threads, [&](std::size_t i) {
        const OuterScenario x = simulate_outer_one(model, i, streams.outer);
        std::vector<double> sc(sc_size), in(in_size);
        pairs.summarize_scenario(x, sc);
        const rng::Stream path_stream = streams.inner.fork(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m_prime; ++j) {
            const InnerPath y = simulate_inner_conditional_one(model, x, j, path_stream);
            pairs.summarize_inner(y, in);
            acc += portfolio.v0 - pairs.pair_discounted_payoff(sc.data(), in.data());
        }
        loss_bar[i] = acc / static_cast<double>(m_prime);
    });
    SnsResult result;
    result.loss_estimates = loss_bar;
    result.inner_simulations = n * m_prime;
    result.payoff_evaluations = n * m_prime;
    std::vector<double> gvals(n);
    for (const auto& risk : risks) {
        for (std::size_t i = 0; i < n; ++i) gvals[i] = risk.eval(loss_bar[i]);
        result.rho_hat.push_back(mean_of(gvals));
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline double sns_estimate(const Portfolio& portfolio, const RiskFunction& risk, std::size_t n,
                           std::size_t m_prime, const EstimatorStreams& streams,
                           unsigned threads = 0) {
    const RiskFunction risks[1] = {risk};
    return sns_estimate_multi(portfolio, risks, n, m_prime, streams, threads).rho_hat[0];
}

// Gordy-Juneja style allocation for a given total budget.
inline std::size_t sns_inner_allocation(std::size_t budget) {
    const auto m = static_cast<std::size_t>(
        std::llround(std::cbrt(static_cast<double>(budget))));
    return std::max<std::size_t>(1, m);
}

struct RegressionResult {
    std::vector<double> rho_hat;        // one per risk function
    std::vector<double> fitted_losses;  // fitted L at the regression scenarios
    bool rank_deficient = false;
    std::size_t inner_simulations = 0;
    std::size_t payoff_evaluations = 0;
    double seconds = 0.0;
};

namespace detail {

// Weighted Laguerre basis value e^{-x/2} l_k(x) for k = 0..order, with
// intercept prepended; x is the price normalized by its initial level.
inline void fill_laguerre_row(double* row, std::span<const double> prices,
                              std::span<const double> s0, std::size_t order) {
    row[0] = 1.0;
    std::size_t pos = 1;
    for (std::size_t a = 0; a < prices.size(); ++a) {
        const double x = prices[a] / s0[a];
        const double wgt = std::exp(-0.5 * x);
        double lkm1 = 1.0;        // l_0
        double lk = 1.0 - x;      // l_1
        row[pos++] = wgt;
        if (order >= 1) row[pos++] = wgt * lk;
        for (std::size_t k = 2; k <= order; ++k) {
            const double lkp1 = ((2.0 * static_cast<double>(k) - 1.0 - x) * lk -
                                 (static_cast<double>(k) - 1.0) * lkm1) /
                                static_cast<double>(k);
            lkm1 = lk;
            lk = lkp1;
            row[pos++] = wgt * lk;
        }
    }
}

}  // namespace detail

// Regression baseline: one (configurable) conditional inner sample per
// scenario, loss samples regressed on weighted Laguerre polynomials of the
// time-tau asset prices, risk function applied to the fitted values.
inline RegressionResult regression_estimate_multi(const Portfolio& portfolio,
                                                  std::span<const RiskFunction> risks,
                                                  std::size_t n, std::size_t basis_order,
                                                  const EstimatorStreams& streams,
                                                  std::size_t inner_samples = 1,
                                                  unsigned threads = 0) {
    const auto& model = portfolio.model;
    const std::size_t cols = 1 + (basis_order + 1) * model.d;
    if (n < cols) throw std::invalid_argument("regression: need n >= number of basis functions");
    if (inner_samples < 1) throw std::invalid_argument("regression: inner_samples must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    if (threads == 0) threads = default_thread_count();

    const PortfolioPairEvaluator pairs(portfolio);
    const std::size_t sc_size = pairs.scenario_summary_size();
    const std::size_t in_size = pairs.inner_summary_size();
    std::vector<double> design(n * cols);
    std::vector<double> losses(n);
    parallel_for_each(n, threads, [&](std::size_t i) {
        const OuterScenario x = simulate_outer_one(model, i, streams.outer);
        detail::fill_laguerre_row(design.data() + i * cols, x.last_prices(), model.s0,
                                  basis_order);
        std::vector<double> sc(sc_size), in(in_size);
        pairs.summarize_scenario(x, sc);
        const rng::Stream path_stream = streams.inner.fork(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < inner_samples; ++j) {
            const InnerPath y = simulate_inner_conditional_one(model, x, j, path_stream);
            pairs.summarize_inner(y, in);
            acc += portfolio.v0 - pairs.pair_discounted_payoff(sc.data(), in.data());
        }
        losses[i] = acc / static_cast<double>(inner_samples);
    });

    const auto fit = solve_least_squares(design, n, cols, losses);
    RegressionResult result;
    result.rank_deficient = fit.rank_deficient;
    result.fitted_losses.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t c = 0; c < cols; ++c) v += design[i * cols + c] * fit.coeffs[c];
        result.fitted_losses[i] = v;
    }
    result.inner_simulations = n * inner_samples;
    result.payoff_evaluations = n * inner_samples;
    std::vector<double> gvals(n);
    for (const auto& risk : risks) {
        for (std::size_t i = 0; i < n; ++i) gvals[i] = risk.eval(result.fitted_losses[i]);
        result.rho_hat.push_back(mean_of(gvals));
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline double regression_estimate(const Portfolio& portfolio, const RiskFunction& risk,
                                  std::size_t n, std::size_t basis_order,
                                  const EstimatorStreams& streams,
                                  std::size_t inner_samples = 1, unsigned threads = 0) {
    const RiskFunction risks[1] = {risk};
    return regression_estimate_multi(portfolio, risks, n, basis_order, streams, inner_samples,
                                     threads).rho_hat[0];
}

}  // namespace nestedrisk

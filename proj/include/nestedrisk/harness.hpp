#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestedrisk/estimators.hpp"
#include "nestedrisk/math.hpp"
#include "nestedrisk/parallel.hpp"
#include "nestedrisk/payoff.hpp"
#include "nestedrisk/riskfn.hpp"

namespace nestedrisk {

// High-precision reference built from analytic per-scenario losses: the
// threshold x0 is the empirical quantile of the losses and rho* the mean of
// g over them, with its own standard error tracked for later comparisons.
struct Benchmark {
    double threshold = 0.0;  // x0
    double quantile = 0.9;
    std::size_t n_bench = 0;
    std::uint64_t loss_sample_digest = 0;
    struct Entry {
        RiskKind kind;
        double rho_star;
        double std_error;
    };
    std::vector<Entry> entries;

    const Entry& entry(RiskKind kind) const {
        for (const auto& e : entries) {
            if (e.kind == kind) return e;
        }
        throw std::invalid_argument("benchmark: risk kind not present");
    }
    double rho_star(RiskKind kind) const { return entry(kind).rho_star; }

    RiskFunction risk(RiskKind kind) const { return RiskFunction{kind, threshold}; }
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

inline Benchmark build_benchmark(const Portfolio& portfolio, std::span<const RiskKind> kinds,
                                 std::size_t n_bench, double quantile, const rng::Stream& stream,
                                 unsigned threads = 0,
                                 std::optional<double> threshold_override = {}) {
    if (n_bench < 10000) throw std::invalid_argument("build_benchmark: n_bench must be >= 1e4");
    if (threads == 0) threads = default_thread_count();
    std::vector<double> losses(n_bench);
    parallel_for_each(n_bench, threads, [&](std::size_t i) {
        const OuterScenario x = simulate_outer_one(portfolio.model, i, stream);
        losses[i] = analytic_loss(portfolio, x);
    });
    Benchmark bench;
    bench.quantile = quantile;
    bench.n_bench = n_bench;
    bench.threshold = threshold_override ? *threshold_override
                                         : empirical_quantile(losses, quantile);
    bench.loss_sample_digest =
        detail::fnv1a(losses.data(), losses.size() * sizeof(double), 1469598103934665603ULL);
    std::vector<double> gvals(n_bench);
    for (RiskKind kind : kinds) {
        const RiskFunction g{kind, bench.threshold};
        for (std::size_t i = 0; i < n_bench; ++i) gvals[i] = g.eval(losses[i]);
        const double mean = mean_of(gvals);
        const double se = std::sqrt(population_variance(gvals, mean) /
                                    static_cast<double>(n_bench));
        bench.entries.push_back({kind, mean, se});
    }
    return bench;
}

struct MacroMetrics {
    double rel_abs_bias = 0.0;
    double rel_std = 0.0;
    double rrmse = 0.0;
    double mse_rel = 0.0;  // squared rrmse
};

// Relative error metrics of macro-rep estimates against the benchmark value.
// Uses the population variance so mse = bias^2 + variance holds exactly; the
// identity is asserted here to guard the decomposition.
inline MacroMetrics metrics_from(std::span<const double> estimates, double rho_star) {
    if (estimates.empty()) throw std::invalid_argument("metrics_from: no estimates");
    if (rho_star == 0.0) throw std::invalid_argument("metrics_from: benchmark value is zero");
    const double mean = mean_of(estimates);
    const double var = population_variance(estimates, mean);
    const double bias = mean - rho_star;
    std::vector<double> sq(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double d = estimates[i] - rho_star;
        sq[i] = d * d;
    }
    const double mse = mean_of(sq);
    const double recomposed = bias * bias + var;
    if (std::abs(mse - recomposed) > 1e-9 * std::max(1.0, std::abs(mse))) {
        throw NumericError("metrics_from: mse decomposition mismatch");
    }
    MacroMetrics m;
    const double scale = std::abs(rho_star);
    m.rel_abs_bias = std::abs(bias) / scale;
    m.rel_std = std::sqrt(var) / scale;
    m.rrmse = std::sqrt(mse) / scale;
    m.mse_rel = mse / (rho_star * rho_star);
    return m;
}

inline double coverage_from(std::span<const double> ci_lo, std::span<const double> ci_hi,
                            double rho_star) {
    if (ci_lo.size() != ci_hi.size() || ci_lo.empty()) {
        throw std::invalid_argument("coverage_from: bad interval arrays");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ci_lo.size(); ++i) {
        if (ci_lo[i] <= rho_star && rho_star <= ci_hi[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ci_lo.size());
}

inline LineFit fit_loglog_slope(std::span<const std::size_t> budgets,
                                std::span<const double> mse) {
    if (budgets.size() != mse.size() || budgets.size() < 3) {
        throw std::invalid_argument("fit_loglog_slope: need >= 3 points");
    }
    std::vector<double> lx(budgets.size()), ly(budgets.size());
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] == 0 || !(mse[i] > 0.0)) {
            throw std::invalid_argument("fit_loglog_slope: values must be positive");
        }
        lx[i] = std::log(static_cast<double>(budgets[i]));
        ly[i] = std::log(mse[i]);
    }
    return fit_line(lx, ly);
}

// ---- macro replication drivers ----

struct GnsMacroResult {
    std::vector<RiskFunction> risks;
    // [risk][rep]
    std::vector<std::vector<double>> rho, ci_lo, ci_hi, sigma_mn_sq;
    std::size_t n = 0, m = 0;
    double seconds = 0.0;
};

inline GnsMacroResult macro_gns(const Portfolio& portfolio,
                                std::span<const RiskFunction> risks, std::size_t n,
                                std::size_t m, double alpha, std::size_t reps,
                                std::uint64_t seed, const GnsOptions& options = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    GnsMacroResult out;
    out.risks.assign(risks.begin(), risks.end());
    out.n = n;
    out.m = m;
    out.rho.assign(risks.size(), {});
    out.ci_lo.assign(risks.size(), {});
    out.ci_hi.assign(risks.size(), {});
    out.sigma_mn_sq.assign(risks.size(), {});
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto streams = make_estimation_streams(seed, rep);
        const auto result = gns_estimate_multi(portfolio, risks, n, m, alpha, streams, options);
        for (std::size_t g = 0; g < risks.size(); ++g) {
            const auto& r = result.reports[g];
            out.rho[g].push_back(r.rho_hat);
            out.ci_lo[g].push_back(r.ci_lo);
            out.ci_hi[g].push_back(r.ci_hi);
            out.sigma_mn_sq[g].push_back(r.sigma_mn_sq_hat);
        }
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct SnsMacroResult {
    std::vector<RiskFunction> risks;
    std::vector<std::vector<double>> rho;  // [risk][rep]
    std::size_t n = 0, m_prime = 0;
    double seconds = 0.0;
};

inline SnsMacroResult macro_sns(const Portfolio& portfolio, std::span<const RiskFunction> risks,
                                std::size_t n, std::size_t m_prime, std::size_t reps,
                                std::uint64_t seed, unsigned threads = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    SnsMacroResult out;
    out.risks.assign(risks.begin(), risks.end());
    out.n = n;
    out.m_prime = m_prime;
    out.rho.assign(risks.size(), {});
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto streams = make_conditional_streams(seed, rep);
        const auto result = sns_estimate_multi(portfolio, risks, n, m_prime, streams, threads);
        for (std::size_t g = 0; g < risks.size(); ++g) out.rho[g].push_back(result.rho_hat[g]);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline EstimatorStreams make_regression_streams(std::uint64_t seed, std::uint64_t replicate) {
    return {rng::stream_for(seed, rng::Purpose::Regression, replicate),
            rng::stream_for(seed, rng::Purpose::Regression, replicate).fork(0x1ee7)};
}

struct RegressionMacroResult {
    std::vector<RiskFunction> risks;
    std::vector<std::vector<double>> rho;  // [risk][rep]
    std::size_t n = 0;
    double seconds = 0.0;
};

inline RegressionMacroResult macro_regression(const Portfolio& portfolio,
                                              std::span<const RiskFunction> risks, std::size_t n,
                                              std::size_t basis_order, std::size_t inner_samples,
                                              std::size_t reps, std::uint64_t seed,
                                              unsigned threads = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    RegressionMacroResult out;
    out.risks.assign(risks.begin(), risks.end());
    out.n = n;
    out.rho.assign(risks.size(), {});
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto streams = make_regression_streams(seed, rep);
        const auto result = regression_estimate_multi(portfolio, risks, n, basis_order, streams,
                                                      inner_samples, threads);
        for (std::size_t g = 0; g < risks.size(); ++g) out.rho[g].push_back(result.rho_hat[g]);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- report assembly ----

struct ReportRow {
    std::string estimator;
    RiskKind risk;
    std::size_t budget = 0;  // inner-simulation count
    std::size_t n = 0;
    std::size_t m = 0;
    MacroMetrics metrics;
    std::optional<double> coverage;
    std::size_t reps = 0;
    double seconds = 0.0;
};

struct ConvergenceRow {
    std::size_t budget = 0;
    double mse_rel = 0.0;
};

struct ConvergenceSet {
    std::string estimator;
    RiskKind risk;
    std::vector<ConvergenceRow> rows;
    LineFit slope;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

inline std::string report_csv_text(std::span<const ReportRow> rows) {
    std::string out = "estimator,risk_fn,budget,n,m,rel_abs_bias,rel_std,rrmse,coverage,reps,seconds\n";
    for (const auto& row : rows) {
        out += row.estimator;
        out += ',';
        out += risk_kind_name(row.risk);
        out += ',';
        out += std::to_string(row.budget) + ',' + std::to_string(row.n) + ',' +
               std::to_string(row.m) + ',';
        out += detail::format_double(row.metrics.rel_abs_bias) + ',';
        out += detail::format_double(row.metrics.rel_std) + ',';
        out += detail::format_double(row.metrics.rrmse) + ',';
        out += row.coverage ? detail::format_double(*row.coverage) : std::string();
        out += ',' + std::to_string(row.reps) + ',';
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", row.seconds);
        out += buf;
        out += '\n';
    }
    return out;
}

inline std::string convergence_csv_text(const ConvergenceSet& set) {
    std::string out = "budget,mse_rel,slope_fit\n";
    for (const auto& row : set.rows) {
        out += std::to_string(row.budget) + ',' + detail::format_double(row.mse_rel) + ',' +
               detail::format_double(set.slope.slope) + '\n';
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
}

// ---- config-independent study plan ----

enum class StudyKind { Table1, Table2, Coverage, Convergence };

struct StudyPlan {
    StudyKind kind = StudyKind::Table1;
    std::vector<RiskKind> risk_kinds;
    double quantile = 0.9;
    double alpha = 0.1;
    std::optional<double> threshold_override;
    std::size_t n_bench = 1000000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    GnsOptions gns_options;

    std::vector<std::size_t> gns_budgets;                       // m = n cells
    std::size_t gns_n = 0, gns_m = 0;                           // single cell
    std::vector<std::pair<std::size_t, std::size_t>> sns_allocations;  // (n, m')
    std::vector<std::size_t> sns_budgets;                       // convergence cells
    std::size_t regression_n = 0;
    std::size_t basis_order = 4;
    std::size_t regression_inner = 1;
    std::size_t rrmse_reps = 100;
    std::size_t coverage_reps = 200;
};

struct StudyOutput {
    Benchmark benchmark;
    std::vector<ReportRow> rows;
    std::vector<ConvergenceSet> convergence;
};

inline StudyOutput run_macro_study(const Portfolio& portfolio, const StudyPlan& plan) {
    StudyOutput out;
    out.benchmark = build_benchmark(portfolio, plan.risk_kinds, plan.n_bench, plan.quantile,
                                    rng::stream_for(plan.seed, rng::Purpose::Benchmark),
                                    plan.threads, plan.threshold_override);
    std::vector<RiskFunction> risks;
    for (RiskKind k : plan.risk_kinds) risks.push_back(out.benchmark.risk(k));

    auto gns_rows = [&](std::size_t n, std::size_t m, std::size_t reps) {
        const auto res = macro_gns(portfolio, risks, n, m, plan.alpha, reps, plan.seed,
                                   plan.gns_options);
        for (std::size_t g = 0; g < risks.size(); ++g) {
            ReportRow row;
            row.estimator = "gns";
            row.risk = risks[g].kind;
            row.budget = m;
            row.n = n;
            row.m = m;
            row.metrics = metrics_from(res.rho[g], out.benchmark.rho_star(risks[g].kind));
            row.coverage = coverage_from(res.ci_lo[g], res.ci_hi[g],
                                         out.benchmark.rho_star(risks[g].kind));
            row.reps = reps;
            row.seconds = res.seconds;
            out.rows.push_back(row);
        }
        return res;
    };

    switch (plan.kind) {
        case StudyKind::Table1: {
            for (std::size_t budget : plan.gns_budgets) {
                gns_rows(budget, budget, plan.coverage_reps);
            }
            break;
        }
        case StudyKind::Coverage: {
            gns_rows(plan.gns_n, plan.gns_m, plan.coverage_reps);
            break;
        }
        case StudyKind::Convergence: {
            std::vector<std::vector<double>> gns_mse(risks.size());
            for (std::size_t budget : plan.gns_budgets) {
                const auto res = macro_gns(portfolio, risks, budget, budget, plan.alpha,
                                           plan.rrmse_reps, plan.seed, plan.gns_options);
                for (std::size_t g = 0; g < risks.size(); ++g) {
                    const auto met =
                        metrics_from(res.rho[g], out.benchmark.rho_star(risks[g].kind));
                    gns_mse[g].push_back(met.mse_rel);
                    ReportRow row;
                    row.estimator = "gns";
                    row.risk = risks[g].kind;
                    row.budget = budget;
                    row.n = budget;
                    row.m = budget;
                    row.metrics = met;
                    row.reps = plan.rrmse_reps;
                    row.seconds = res.seconds;
                    out.rows.push_back(row);
                }
            }
            for (std::size_t g = 0; g < risks.size(); ++g) {
                ConvergenceSet set;
                set.estimator = "gns";
                set.risk = risks[g].kind;
                for (std::size_t b = 0; b < plan.gns_budgets.size(); ++b) {
                    set.rows.push_back({plan.gns_budgets[b], gns_mse[g][b]});
                }
                set.slope = fit_loglog_slope(plan.gns_budgets, gns_mse[g]);
                out.convergence.push_back(std::move(set));
            }
            if (!plan.sns_budgets.empty()) {
                std::vector<std::vector<double>> sns_mse(risks.size());
                for (std::size_t budget : plan.sns_budgets) {
                    const std::size_t mp = sns_inner_allocation(budget);
                    const std::size_t n = std::max<std::size_t>(1, budget / mp);
                    const auto res = macro_sns(portfolio, risks, n, mp, plan.rrmse_reps,
                                               plan.seed, plan.threads);
                    for (std::size_t g = 0; g < risks.size(); ++g) {
                        const auto met =
                            metrics_from(res.rho[g], out.benchmark.rho_star(risks[g].kind));
                        sns_mse[g].push_back(met.mse_rel);
                        ReportRow row;
                        row.estimator = "sns";
                        row.risk = risks[g].kind;
                        row.budget = n * mp;
                        row.n = n;
                        row.m = mp;
                        row.metrics = met;
                        row.reps = plan.rrmse_reps;
                        row.seconds = res.seconds;
                        out.rows.push_back(row);
                    }
                }
                for (std::size_t g = 0; g < risks.size(); ++g) {
                    ConvergenceSet set;
                    set.estimator = "sns";
                    set.risk = risks[g].kind;
                    for (std::size_t b = 0; b < plan.sns_budgets.size(); ++b) {
                        set.rows.push_back({plan.sns_budgets[b], sns_mse[g][b]});
                    }
                    set.slope = fit_loglog_slope(plan.sns_budgets, sns_mse[g]);
                    out.convergence.push_back(std::move(set));
                }
            }
            break;
        }
        case StudyKind::Table2: {
            gns_rows(plan.gns_n, plan.gns_m, plan.rrmse_reps);
            for (const auto& [n, mp] : plan.sns_allocations) {
                const auto res = macro_sns(portfolio, risks, n, mp, plan.rrmse_reps, plan.seed,
                                           plan.threads);
                for (std::size_t g = 0; g < risks.size(); ++g) {
                    ReportRow row;
                    row.estimator = "sns";
                    row.risk = risks[g].kind;
                    row.budget = n * mp;
                    row.n = n;
                    row.m = mp;
                    row.metrics = metrics_from(res.rho[g], out.benchmark.rho_star(risks[g].kind));
                    row.reps = plan.rrmse_reps;
                    row.seconds = res.seconds;
                    out.rows.push_back(row);
                }
            }
            if (plan.regression_n > 0) {
                const auto res =
                    macro_regression(portfolio, risks, plan.regression_n, plan.basis_order,
                                     plan.regression_inner, plan.rrmse_reps, plan.seed,
                                     plan.threads);
                for (std::size_t g = 0; g < risks.size(); ++g) {
                    ReportRow row;
                    row.estimator = "regression";
                    row.risk = risks[g].kind;
                    row.budget = plan.regression_n * plan.regression_inner;
                    row.n = plan.regression_n;
                    row.m = plan.regression_inner;
                    row.metrics = metrics_from(res.rho[g], out.benchmark.rho_star(risks[g].kind));
                    row.reps = plan.rrmse_reps;
                    row.seconds = res.seconds;
                    out.rows.push_back(row);
                }
            }
            break;
        }
    }
    return out;
}

}  // namespace nestedrisk

// Command-line front end: single estimator runs and the experiment studies,
// both driven by a JSON config file.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nestedrisk/config.hpp"
#include "nestedrisk/estimators.hpp"
#include "nestedrisk/harness.hpp"
#include "nestedrisk/oracle.hpp"

namespace {

using namespace nestedrisk;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out_dir_override;
    std::optional<std::size_t> macro_reps;
    bool quiet = false;
};

void apply_overrides(ExperimentConfig& cfg, const CommonArgs& args) {
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.effective["harness"]["seed"] = *args.seed;
    }
    if (!args.out_dir_override.empty()) {
        cfg.out_dir = args.out_dir_override;
        cfg.effective["output"]["dir"] = args.out_dir_override;
    }
    if (args.macro_reps) {
        cfg.rrmse_reps = *args.macro_reps;
        cfg.coverage_reps = *args.macro_reps;
        cfg.effective["harness"]["rrmse_reps"] = *args.macro_reps;
        cfg.effective["harness"]["coverage_reps"] = *args.macro_reps;
    }
}

void write_provenance(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir + "/effective_config.json", cfg.effective.dump(2) + "\n");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int run_estimate(const CommonArgs& args, const std::string& estimator) {
    ExperimentConfig cfg = load_config(args.config_path);
    apply_overrides(cfg, args);
    write_provenance(cfg);
    const unsigned threads = args.threads ? args.threads : default_thread_count();

    if (cfg.problem == "discrete") {
        if (estimator == "regression") {
            throw ConfigError("estimator: regression is not defined for discrete problems");
        }
        const RiskFunction g{cfg.risk_kinds.front(), cfg.discrete_threshold};
        auto seq = rng::stream_for(cfg.seed, rng::Purpose::Oracle).substream(0);
        const auto choice = estimator == "gns" ? NestedEstimatorChoice::Gns
                                               : NestedEstimatorChoice::Sns;
        const std::size_t m = estimator == "gns" ? cfg.gns_m : cfg.sns_allocations.front().second;
        const std::size_t n = estimator == "gns" ? cfg.gns_n : cfg.sns_allocations.front().first;
        const double rho = sample_problem(cfg.discrete, choice, g, n, m, seq);
        std::printf("estimator,risk_fn,n,m,rho_hat\n");
        std::printf("%s,%s,%zu,%zu,%s\n", estimator.c_str(), risk_kind_name(g.kind), n, m,
                    fmt(rho).c_str());
        if (!args.quiet) {
            std::fprintf(stderr, "discrete problem: rho_hat = %s, exact rho = %s\n",
                         fmt(rho).c_str(), fmt(exact_rho(cfg.discrete, g)).c_str());
        }
        return 0;
    }

    const Portfolio portfolio = cfg.build_portfolio();
    double threshold;
    if (cfg.threshold_override) {
        threshold = *cfg.threshold_override;
    } else {
        const auto bench = build_benchmark(portfolio, cfg.risk_kinds, cfg.n_bench, cfg.quantile,
                                           rng::stream_for(cfg.seed, rng::Purpose::Benchmark),
                                           threads);
        threshold = bench.threshold;
        if (!args.quiet) {
            std::fprintf(stderr, "threshold x0 = %s (benchmark quantile %.4g over %zu scenarios)\n",
                         fmt(threshold).c_str(), cfg.quantile, cfg.n_bench);
        }
    }
    std::vector<RiskFunction> risks;
    for (RiskKind k : cfg.risk_kinds) risks.push_back(RiskFunction{k, threshold});

    if (estimator == "gns") {
        GnsOptions options;
        options.threads = threads;
        const auto streams = make_estimation_streams(cfg.seed, 0);
        const auto result =
            gns_estimate_multi(portfolio, risks, cfg.gns_n, cfg.gns_m, cfg.alpha, streams,
                               options);
        std::printf(
            "estimator,risk_fn,n,m,rho_hat,sigma1_sq,sigma2_sq,sigma_mn_sq,ci_lo,ci_hi,alpha,"
            "epsilon,max_lr,min_ess\n");
        for (const auto& r : result.reports) {
            std::printf("gns,%s,%zu,%zu,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s\n",
                        risk_kind_name(r.risk.kind), r.diagnostics.n, r.diagnostics.m,
                        fmt(r.rho_hat).c_str(), fmt(r.sigma1_sq_hat).c_str(),
                        fmt(r.sigma2_sq_hat).c_str(), fmt(r.sigma_mn_sq_hat).c_str(),
                        fmt(r.ci_lo).c_str(), fmt(r.ci_hi).c_str(), fmt(r.alpha).c_str(),
                        r.epsilon_used ? fmt(*r.epsilon_used).c_str() : "",
                        fmt(r.diagnostics.max_likelihood_ratio).c_str(),
                        fmt(r.diagnostics.min_effective_sample_size).c_str());
            if (!args.quiet) {
                std::fprintf(stderr,
                             "gns %-12s rho=%-12.6g ci=[%.6g, %.6g] sigma1^2=%.4g sigma2^2=%.4g "
                             "(%.2fs, %zu x %zu pairs)\n",
                             risk_kind_name(r.risk.kind), r.rho_hat, r.ci_lo, r.ci_hi,
                             r.sigma1_sq_hat, r.sigma2_sq_hat, r.diagnostics.seconds,
                             r.diagnostics.n, r.diagnostics.m);
            }
        }
        return 0;
    }
    if (estimator == "sns") {
        const auto [n, mp] = cfg.sns_allocations.front();
        const auto streams = make_conditional_streams(cfg.seed, 0);
        const auto result = sns_estimate_multi(portfolio, risks, n, mp, streams, threads);
        std::printf("estimator,risk_fn,n,m,rho_hat\n");
        for (std::size_t g = 0; g < risks.size(); ++g) {
            std::printf("sns,%s,%zu,%zu,%s\n", risk_kind_name(risks[g].kind), n, mp,
                        fmt(result.rho_hat[g]).c_str());
        }
        if (!args.quiet) {
            std::fprintf(stderr, "sns allocation %zu x %zu, budget %zu, %.2fs\n", n, mp, n * mp,
                         result.seconds);
        }
        return 0;
    }
    if (estimator == "regression") {
        const auto streams = make_regression_streams(cfg.seed, 0);
        const auto result =
            regression_estimate_multi(portfolio, risks, cfg.regression_n, cfg.basis_order,
                                      streams, cfg.regression_inner, threads);
        if (result.rank_deficient) {
            std::fprintf(stderr, "warning: rank-deficient regression design, "
                                 "minimum-norm solution used\n");
        }
        std::printf("estimator,risk_fn,n,m,rho_hat\n");
        for (std::size_t g = 0; g < risks.size(); ++g) {
            std::printf("regression,%s,%zu,%zu,%s\n", risk_kind_name(risks[g].kind),
                        cfg.regression_n, cfg.regression_inner, fmt(result.rho_hat[g]).c_str());
        }
        return 0;
    }
    throw ConfigError("estimator: expected one of gns, sns, regression");
}

int run_experiment(const CommonArgs& args, const std::string& study) {
    ExperimentConfig cfg = load_config(args.config_path);
    apply_overrides(cfg, args);
    write_provenance(cfg);
    const unsigned threads = args.threads ? args.threads : default_thread_count();

    StudyKind kind;
    if (study == "table1") kind = StudyKind::Table1;
    else if (study == "table2") kind = StudyKind::Table2;
    else if (study == "coverage") kind = StudyKind::Coverage;
    else if (study == "convergence") kind = StudyKind::Convergence;
    else throw ConfigError("study: expected one of convergence, coverage, table1, table2");

    if (cfg.problem != "market") {
        throw ConfigError("experiment studies require a market problem");
    }
    const Portfolio portfolio = cfg.build_portfolio();
    const StudyPlan plan = study_plan_from_config(cfg, kind, threads);
    const StudyOutput out = run_macro_study(portfolio, plan);

    const std::string report_path = cfg.out_dir + "/" + study + "_report.csv";
    write_text_file(report_path, report_csv_text(out.rows));
    if (!args.quiet) {
        std::fprintf(stderr, "benchmark: x0 = %s, %zu scenarios\n", fmt(out.benchmark.threshold).c_str(),
                     out.benchmark.n_bench);
        for (const auto& e : out.benchmark.entries) {
            std::fprintf(stderr, "  rho*(%s) = %s (se %.3g)\n", risk_kind_name(e.kind),
                         fmt(e.rho_star).c_str(), e.std_error);
        }
        std::fprintf(stderr, "wrote %s (%zu rows)\n", report_path.c_str(), out.rows.size());
    }
    for (const auto& set : out.convergence) {
        const std::string path =
            cfg.out_dir + "/convergence_" + set.estimator + "_" + risk_kind_name(set.risk) + ".csv";
        write_text_file(path, convergence_csv_text(set));
        if (!args.quiet) {
            std::fprintf(stderr, "%s %s: slope %.4f (stderr %.4f) -> %s\n", set.estimator.c_str(),
                         risk_kind_name(set.risk), set.slope.slope, set.slope.slope_stderr,
                         path.c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested risk estimation: pooled likelihood-ratio, standard nested, and "
                 "regression estimators with an experiment harness"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string estimator = "gns";
    std::string study = "table1";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "JSON config file")->required();
        cmd->add_option("--seed", args.seed, "override harness.seed");
        cmd->add_option("--threads", args.threads,
                        "worker threads (default: NESTED_RISK_THREADS or hardware)");
        cmd->add_option("--out-dir", args.out_dir_override, "override output.dir");
        cmd->add_option("--macro-reps", args.macro_reps, "override macro replication counts");
        cmd->add_flag("--quiet", args.quiet, "suppress progress output on stderr");
    };

    CLI::App* est = app.add_subcommand("estimate", "run one estimator once");
    add_common(est);
    est->add_option("--estimator", estimator, "gns | sns | regression")->required();

    CLI::App* exp = app.add_subcommand("experiment", "run a macro-replication study");
    add_common(exp);
    exp->add_option("--study", study, "convergence | coverage | table1 | table2")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (est->parsed()) return run_estimate(args, estimator);
        return run_experiment(args, study);
    } catch (const nestedrisk::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const nestedrisk::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nestedrisk/harness.hpp"
#include "nestedrisk/model.hpp"
#include "nestedrisk/oracle.hpp"
#include "nestedrisk/payoff.hpp"
#include "nestedrisk/riskfn.hpp"

namespace nestedrisk {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfg_detail {

using nlohmann::json;

inline const json& member(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError("missing field: " + path + "." + key);
    }
    return j.at(key);
}

inline double number_at(const json& j, const std::string& key, const std::string& path) {
    const json& v = member(j, key, path);
    if (!v.is_number()) throw ConfigError("field must be a number: " + path + "." + key);
    return v.get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback) {
    if (j.is_object() && j.contains(key) && j.at(key).is_number()) return j.at(key).get<double>();
    return fallback;
}

inline std::size_t count_at(const json& j, const std::string& key, const std::string& path) {
    const double v = number_at(j, key, path);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw ConfigError("field must be a nonnegative integer: " + path + "." + key);
    }
    return static_cast<std::size_t>(v);
}

inline std::vector<double> vector_at(const json& j, const std::string& key,
                                     const std::string& path) {
    const json& v = member(j, key, path);
    if (!v.is_array()) throw ConfigError("field must be an array: " + path + "." + key);
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            throw ConfigError("array entry must be a number: " + path + "." + key + "[" +
                              std::to_string(i) + "]");
        }
        out.push_back(v[i].get<double>());
    }
    return out;
}

// Cholesky factor of the equicorrelated block sigma^2 [(1-rho) I + rho J].
inline std::vector<std::vector<double>> equicorrelated_cholesky(std::size_t k, double sigma,
                                                                double rho) {
    std::vector<std::vector<double>> c(k, std::vector<double>(k, 0.0));
    std::vector<std::vector<double>> l(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) c[i][j] = sigma * sigma * (i == j ? 1.0 : rho);
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = c[i][j];
            for (std::size_t t = 0; t < j; ++t) sum -= l[i][t] * l[j][t];
            if (i == j) {
                if (sum <= 0.0) throw ConfigError("model.vol_groups: block is not positive definite");
                l[i][j] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    return l;
}

}  // namespace cfg_detail

struct ExperimentConfig {
    nlohmann::json effective;  // normalized config with defaults filled

    std::string problem;  // "market" or "discrete"
    MarketModel model;
    std::vector<Instrument> instruments;
    DiscreteNestedProblem discrete;
    double discrete_threshold = 0.0;

    std::vector<RiskKind> risk_kinds;
    double quantile = 0.9;
    double alpha = 0.1;
    std::optional<double> threshold_override;

    std::size_t gns_n = 0, gns_m = 0;
    std::vector<std::pair<std::size_t, std::size_t>> sns_allocations;
    std::size_t regression_n = 0;
    std::size_t basis_order = 4;
    std::size_t regression_inner = 1;

    std::size_t n_bench = 1000000;
    std::size_t rrmse_reps = 100;
    std::size_t coverage_reps = 200;
    std::uint64_t seed = 1;
    std::vector<std::size_t> gns_budgets;
    std::vector<std::size_t> sns_budgets;

    std::string out_dir = "out";

    Portfolio build_portfolio() const {
        if (problem != "market") throw ConfigError("portfolio requested for a non-market problem");
        return make_portfolio(model, instruments);
    }
};

namespace cfg_detail {

inline json normalize_market_model(const json& in) {
    json m;
    const std::size_t d = count_at(in, "assets", "model");
    if (d == 0) throw ConfigError("model.assets: must be >= 1");
    m["assets"] = d;
    const auto s0 = vector_at(in, "s0", "model");
    if (s0.size() != d) throw ConfigError("model.s0: needs one entry per asset");
    m["s0"] = s0;
    m["mu"] = number_at(in, "mu", "model");
    m["r"] = number_at(in, "r", "model");

    if (in.contains("vol_groups")) {
        const json& vg = in.at("vol_groups");
        const double sigma = number_at(vg, "sigma", "model.vol_groups");
        const double rho = number_at(vg, "rho", "model.vol_groups");
        const json& groups = member(vg, "groups", "model.vol_groups");
        std::vector<std::vector<double>> vol(d, std::vector<double>(d, 0.0));
        std::vector<bool> covered(d, false);
        for (const auto& g : groups) {
            if (!g.is_array() || g.size() != 2) {
                throw ConfigError("model.vol_groups.groups: entries must be [first,last] pairs");
            }
            const std::size_t lo = g[0].get<std::size_t>();
            const std::size_t hi = g[1].get<std::size_t>();
            if (hi < lo || hi >= d) throw ConfigError("model.vol_groups.groups: bad range");
            const auto block = equicorrelated_cholesky(hi - lo + 1, sigma, rho);
            for (std::size_t i = lo; i <= hi; ++i) {
                if (covered[i]) throw ConfigError("model.vol_groups.groups: overlapping ranges");
                covered[i] = true;
                for (std::size_t j = lo; j <= i; ++j) vol[i][j] = block[i - lo][j - lo];
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (!covered[i]) throw ConfigError("model.vol_groups.groups: asset " +
                                               std::to_string(i) + " not covered");
        }
        m["vol"] = vol;
    } else {
        const json& vol = member(in, "vol", "model");
        if (!vol.is_array() || vol.size() != d) {
            throw ConfigError("model.vol: needs one row per asset");
        }
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < d; ++i) {
            if (!vol[i].is_array() || vol[i].size() != d) {
                throw ConfigError("model.vol[" + std::to_string(i) + "]: needs d entries");
            }
            rows.push_back(vol[i].get<std::vector<double>>());
        }
        m["vol"] = rows;
    }

    const json& grid = member(in, "grid", "model");
    json g;
    if (grid.contains("times")) {
        g["times"] = vector_at(grid, "times", "model.grid");
    } else {
        g["T"] = number_at(grid, "T", "model.grid");
        g["steps"] = count_at(grid, "steps", "model.grid");
    }
    g["horizon_index"] = count_at(grid, "horizon_index", "model.grid");
    m["grid"] = g;
    return m;
}

inline json normalize(const json& in) {
    json out;
    const std::string problem =
        in.contains("problem") ? in.at("problem").get<std::string>() : std::string("market");
    if (problem != "market" && problem != "discrete") {
        throw ConfigError("problem: must be \"market\" or \"discrete\"");
    }
    out["problem"] = problem;

    if (problem == "market") {
        out["model"] = normalize_market_model(member(in, "model", "config"));
        const json& pf = member(in, "portfolio", "config");
        const json& insts = member(pf, "instruments", "portfolio");
        if (!insts.is_array() || insts.empty()) {
            throw ConfigError("portfolio.instruments: must be a nonempty array");
        }
        json norm_insts = json::array();
        for (std::size_t i = 0; i < insts.size(); ++i) {
            const std::string path = "portfolio.instruments[" + std::to_string(i) + "]";
            const json& inst = insts[i];
            json ni;
            const std::string kind = member(inst, "kind", path).get<std::string>();
            ni["kind"] = kind;
            ni["asset"] = inst.contains("asset") ? count_at(inst, "asset", path) : 0;
            ni["strike"] = number_at(inst, "strike", path);
            if (kind == "up_out_call" || kind == "down_out_call") {
                ni["barrier"] = number_at(inst, "barrier", path);
            }
            ni["quantity"] = number_or(inst, "quantity", 1.0);
            ni["maturity_index"] =
                inst.contains("maturity_index") ? count_at(inst, "maturity_index", path) : 0;
            ni["monitor_stride"] =
                inst.contains("monitor_stride") ? count_at(inst, "monitor_stride", path) : 1;
            norm_insts.push_back(ni);
        }
        out["portfolio"] = json{{"instruments", norm_insts}};
    } else {
        const json& dj = member(in, "discrete", "config");
        json nd;
        nd["x_prob"] = vector_at(dj, "x_prob", "discrete");
        nd["sampling_pmf"] = vector_at(dj, "sampling_pmf", "discrete");
        nd["cond_pmf"] = member(dj, "cond_pmf", "discrete");
        nd["h_table"] = member(dj, "h_table", "discrete");
        nd["threshold"] = number_at(dj, "threshold", "discrete");
        out["discrete"] = nd;
    }

    const json risk = in.contains("risk") ? in.at("risk") : json::object();
    json nr;
    json fns = json::array();
    if (risk.contains("functions")) {
        for (const auto& f : risk.at("functions")) fns.push_back(f.get<std::string>());
    } else {
        fns = {"indicator", "hockey_stick", "quadratic"};
    }
    nr["functions"] = fns;
    nr["quantile"] = number_or(risk, "quantile", 0.9);
    nr["alpha"] = number_or(risk, "alpha", 0.1);
    nr["threshold"] = (risk.contains("threshold") && !risk.at("threshold").is_null())
                          ? json(risk.at("threshold").get<double>())
                          : json(nullptr);
    out["risk"] = nr;

    const json est = in.contains("estimators") ? in.at("estimators") : json::object();
    json ne;
    const json gns = est.contains("gns") ? est.at("gns") : json::object();
    ne["gns"] = json{{"n", gns.contains("n") ? count_at(gns, "n", "estimators.gns") : 10000},
                     {"m", gns.contains("m") ? count_at(gns, "m", "estimators.gns") : 10000}};
    json allocs = json::array();
    if (est.contains("sns") && est.at("sns").contains("allocations")) {
        for (const auto& a : est.at("sns").at("allocations")) {
            if (!a.is_array() || a.size() != 2) {
                throw ConfigError("estimators.sns.allocations: entries must be [n, m'] pairs");
            }
            allocs.push_back(json::array({a[0].get<std::size_t>(), a[1].get<std::size_t>()}));
        }
    } else {
        allocs = json::array({json::array({100, 100})});
    }
    ne["sns"] = json{{"allocations", allocs}};
    const json reg = est.contains("regression") ? est.at("regression") : json::object();
    ne["regression"] =
        json{{"n", reg.contains("n") ? count_at(reg, "n", "estimators.regression") : 10000},
             {"basis_order",
              reg.contains("basis_order") ? count_at(reg, "basis_order", "estimators.regression")
                                          : 4},
             {"inner_samples", reg.contains("inner_samples")
                                   ? count_at(reg, "inner_samples", "estimators.regression")
                                   : 1}};
    out["estimators"] = ne;

    const json h = in.contains("harness") ? in.at("harness") : json::object();
    json nh;
    nh["benchmark_scenarios"] =
        h.contains("benchmark_scenarios") ? count_at(h, "benchmark_scenarios", "harness") : 1000000;
    nh["rrmse_reps"] = h.contains("rrmse_reps") ? count_at(h, "rrmse_reps", "harness") : 100;
    nh["coverage_reps"] =
        h.contains("coverage_reps") ? count_at(h, "coverage_reps", "harness") : 200;
    nh["seed"] = h.contains("seed") ? h.at("seed").get<std::uint64_t>() : 1;
    json gb = json::array();
    if (h.contains("gns_budgets")) {
        for (const auto& b : h.at("gns_budgets")) gb.push_back(b.get<std::size_t>());
    } else {
        gb = {1000, 3000, 10000};
    }
    nh["gns_budgets"] = gb;
    json sb = json::array();
    if (h.contains("sns_budgets")) {
        for (const auto& b : h.at("sns_budgets")) sb.push_back(b.get<std::size_t>());
    } else {
        sb = {1000, 10000, 100000};
    }
    nh["sns_budgets"] = sb;
    out["harness"] = nh;

    const json o = in.contains("output") ? in.at("output") : json::object();
    out["output"] = json{{"dir", o.contains("dir") ? o.at("dir").get<std::string>()
                                                   : std::string("out")}};
    return out;
}

inline RiskKind risk_kind_from_name(const std::string& name) {
    if (name == "indicator") return RiskKind::Indicator;
    if (name == "hockey_stick") return RiskKind::HockeyStick;
    if (name == "quadratic") return RiskKind::Quadratic;
    throw ConfigError("risk.functions: unknown risk function \"" + name + "\"");
}

inline InstrumentKind instrument_kind_from_name(const std::string& name, const std::string& path) {
    if (name == "european_call") return InstrumentKind::EuropeanCall;
    if (name == "geometric_asian_call") return InstrumentKind::GeometricAsianCall;
    if (name == "up_out_call") return InstrumentKind::UpOutCall;
    if (name == "down_out_call") return InstrumentKind::DownOutCall;
    throw ConfigError(path + ".kind: unknown instrument kind \"" + name + "\"");
}

}  // namespace cfg_detail

inline ExperimentConfig config_from_json(const nlohmann::json& raw) {
    using cfg_detail::json;
    ExperimentConfig cfg;
    try {
        cfg.effective = cfg_detail::normalize(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    const json& j = cfg.effective;
    cfg.problem = j.at("problem").get<std::string>();

    if (cfg.problem == "market") {
        const json& m = j.at("model");
        cfg.model.d = m.at("assets").get<std::size_t>();
        cfg.model.s0 = m.at("s0").get<std::vector<double>>();
        cfg.model.mu = m.at("mu").get<double>();
        cfg.model.r = m.at("r").get<double>();
        cfg.model.vol.assign(cfg.model.d * cfg.model.d, 0.0);
        const auto rows = m.at("vol").get<std::vector<std::vector<double>>>();
        for (std::size_t i = 0; i < cfg.model.d; ++i) {
            for (std::size_t jj = 0; jj < cfg.model.d; ++jj) {
                cfg.model.vol[i * cfg.model.d + jj] = rows[i][jj];
            }
        }
        const json& g = m.at("grid");
        try {
            if (g.contains("times")) {
                cfg.model.grid.times = g.at("times").get<std::vector<double>>();
                cfg.model.grid.horizon_index = g.at("horizon_index").get<std::size_t>();
            } else {
                cfg.model.grid = TimeGrid::uniform(g.at("T").get<double>(),
                                                   g.at("steps").get<std::size_t>(),
                                                   g.at("horizon_index").get<std::size_t>());
            }
            cfg.model.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("model: ") + e.what());
        }
        for (std::size_t i = 0; i < j.at("portfolio").at("instruments").size(); ++i) {
            const json& ij = j.at("portfolio").at("instruments")[i];
            const std::string path = "portfolio.instruments[" + std::to_string(i) + "]";
            Instrument inst;
            inst.kind = cfg_detail::instrument_kind_from_name(ij.at("kind").get<std::string>(),
                                                              path);
            inst.asset = ij.at("asset").get<std::size_t>();
            inst.strike = ij.at("strike").get<double>();
            if (ij.contains("barrier")) inst.barrier = ij.at("barrier").get<double>();
            inst.quantity = ij.at("quantity").get<double>();
            inst.maturity_index = ij.at("maturity_index").get<std::size_t>();
            inst.monitor_stride = ij.at("monitor_stride").get<std::size_t>();
            cfg.instruments.push_back(inst);
        }
        try {
            Portfolio probe{cfg.model, cfg.instruments, 0.0};
            probe.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else {
        const json& dj = j.at("discrete");
        cfg.discrete.x_prob = dj.at("x_prob").get<std::vector<double>>();
        cfg.discrete.sampling_pmf = dj.at("sampling_pmf").get<std::vector<double>>();
        cfg.discrete.cond_pmf = dj.at("cond_pmf").get<std::vector<std::vector<double>>>();
        cfg.discrete.h_table = dj.at("h_table").get<std::vector<std::vector<double>>>();
        cfg.discrete_threshold = dj.at("threshold").get<double>();
        try {
            cfg.discrete.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    for (const auto& f : j.at("risk").at("functions")) {
        cfg.risk_kinds.push_back(cfg_detail::risk_kind_from_name(f.get<std::string>()));
    }
    if (cfg.risk_kinds.empty()) throw ConfigError("risk.functions: must not be empty");
    cfg.quantile = j.at("risk").at("quantile").get<double>();
    cfg.alpha = j.at("risk").at("alpha").get<double>();
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("risk.alpha: must be in (0,1)");
    if (!(cfg.quantile > 0.0 && cfg.quantile < 1.0)) {
        throw ConfigError("risk.quantile: must be in (0,1)");
    }
    if (!j.at("risk").at("threshold").is_null()) {
        cfg.threshold_override = j.at("risk").at("threshold").get<double>();
    }

    cfg.gns_n = j.at("estimators").at("gns").at("n").get<std::size_t>();
    cfg.gns_m = j.at("estimators").at("gns").at("m").get<std::size_t>();
    for (const auto& a : j.at("estimators").at("sns").at("allocations")) {
        cfg.sns_allocations.emplace_back(a[0].get<std::size_t>(), a[1].get<std::size_t>());
    }
    cfg.regression_n = j.at("estimators").at("regression").at("n").get<std::size_t>();
    cfg.basis_order = j.at("estimators").at("regression").at("basis_order").get<std::size_t>();
    cfg.regression_inner =
        j.at("estimators").at("regression").at("inner_samples").get<std::size_t>();

    cfg.n_bench = j.at("harness").at("benchmark_scenarios").get<std::size_t>();
    cfg.rrmse_reps = j.at("harness").at("rrmse_reps").get<std::size_t>();
    cfg.coverage_reps = j.at("harness").at("coverage_reps").get<std::size_t>();
    cfg.seed = j.at("harness").at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("harness").at("gns_budgets")) {
        cfg.gns_budgets.push_back(b.get<std::size_t>());
    }
    for (const auto& b : j.at("harness").at("sns_budgets")) {
        cfg.sns_budgets.push_back(b.get<std::size_t>());
    }
    cfg.out_dir = j.at("output").at("dir").get<std::string>();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json raw;
    try {
        f >> raw;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(raw);
}

inline StudyPlan study_plan_from_config(const ExperimentConfig& cfg, StudyKind kind,
                                        unsigned threads) {
    StudyPlan plan;
    plan.kind = kind;
    plan.risk_kinds = cfg.risk_kinds;
    plan.quantile = cfg.quantile;
    plan.alpha = cfg.alpha;
    plan.threshold_override = cfg.threshold_override;
    plan.n_bench = cfg.n_bench;
    plan.seed = cfg.seed;
    plan.threads = threads;
    plan.gns_options.threads = threads;
    plan.gns_budgets = cfg.gns_budgets;
    plan.gns_n = cfg.gns_n;
    plan.gns_m = cfg.gns_m;
    plan.sns_allocations = cfg.sns_allocations;
    plan.sns_budgets = cfg.sns_budgets;
    plan.regression_n = cfg.regression_n;
    plan.basis_order = cfg.basis_order;
    plan.regression_inner = cfg.regression_inner;
    plan.rrmse_reps = cfg.rrmse_reps;
    plan.coverage_reps = cfg.coverage_reps;
    return plan;
}

}  // namespace nestedrisk

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nestedrisk/config.hpp"

using namespace nestedrisk;
namespace fs = std::filesystem;

namespace {

std::string config_path(const std::string& name) {
    return std::string(NESTEDRISK_CONFIG_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct CliRun {
    int exit_code;
    std::string out;
    std::string err;
};

CliRun run_cli(const std::string& args) {
    static int counter = 0;
    const std::string tag = "cli_run_" + std::to_string(counter++);
    const std::string out = tag + ".out", err = tag + ".err";
    const std::string cmd =
        std::string(NESTEDRISK_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.exit_code = (status >= 256) ? status / 256 : status;  // WEXITSTATUS on POSIX
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

nlohmann::json barrier_json() {
    std::ifstream f(config_path("barrier10.json"));
    nlohmann::json j;
    f >> j;
    return j;
}

}  // namespace

TEST_CASE("shipped configs load and validate", "[config]") {
    const auto cfg = load_config(config_path("barrier10.json"));
    CHECK(cfg.problem == "market");
    CHECK(cfg.model.d == 1);
    CHECK(cfg.model.grid.horizon_index == 12);
    CHECK(cfg.model.grid.tau() == Catch::Approx(0.06));
    CHECK(cfg.instruments.size() == 10);
    CHECK(cfg.gns_n == 10000);
    CHECK(cfg.risk_kinds.size() == 3);

    const auto reduced = load_config(config_path("portfolio_reduced.json"));
    CHECK(reduced.model.d == 12);
    CHECK(reduced.instruments.size() == 48);
    const auto full = load_config(config_path("portfolio240.json"));
    CHECK(full.model.d == 60);
    CHECK(full.instruments.size() == 240);
    const auto smoke = load_config(config_path("smoke.json"));
    CHECK(smoke.gns_budgets.size() == 3);
    const auto demo = load_config(config_path("discrete_demo.json"));
    CHECK(demo.problem == "discrete");
    CHECK(demo.discrete.x_states() == 2);
}

TEST_CASE("normalization is idempotent", "[config]") {
    const auto cfg = load_config(config_path("portfolio_reduced.json"));
    const auto again = config_from_json(cfg.effective);
    CHECK(cfg.effective == again.effective);
    CHECK(cfg.effective.dump(2) == again.effective.dump(2));
}

TEST_CASE("group volatility sugar expands to a consistent factor", "[config]") {
    const auto cfg = load_config(config_path("portfolio_reduced.json"));
    const auto& m = cfg.model;
    // within-group covariance rho sigma^2, across groups zero, diagonal sigma^2
    auto cov = [&](std::size_t i, std::size_t j) {
        double c = 0.0;
        for (std::size_t k = 0; k < m.d; ++k) c += m.vol_at(i, k) * m.vol_at(j, k);
        return c;
    };
    CHECK(cov(0, 0) == Catch::Approx(0.04).epsilon(1e-12));
    CHECK(cov(1, 0) == Catch::Approx(0.012).epsilon(1e-12));
    CHECK(cov(5, 4) == Catch::Approx(0.012).epsilon(1e-12));
    CHECK(cov(4, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(cov(11, 11) == Catch::Approx(0.04).epsilon(1e-12));
    // effective config no longer carries the sugar form
    CHECK_FALSE(cfg.effective.at("model").contains("vol_groups"));
}

TEST_CASE("config errors carry field paths", "[config]") {
    auto j = barrier_json();
    j["model"].erase("vol");
    CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("model.vol"));

    j = barrier_json();
    j["model"]["vol"] = {{0.2}, {0.1}};
    CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("model.vol"));

    j = barrier_json();
    j["model"]["grid"]["horizon_index"] = 200;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);

    j = barrier_json();
    j["portfolio"]["instruments"][2]["strike"] = -5.0;
    CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("instruments[2]"));

    j = barrier_json();
    j["portfolio"]["instruments"][0]["kind"] = "lookback_put";
    CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("instruments[0]"));

    j = barrier_json();
    j["risk"]["alpha"] = 1.5;
    CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("alpha"));
}

TEST_CASE("estimate subcommand runs the discrete demo", "[cli]") {
    const auto r = run_cli("estimate --config " + config_path("discrete_demo.json") +
                           " --estimator gns --out-dir cli_demo_out --quiet");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.rfind("estimator,risk_fn,n,m,rho_hat\n", 0) == 0);
    // rho for the demo instance is 0.5; n = m = 5000 keeps the estimate close
    const auto last_comma = r.out.rfind(',');
    const double rho = std::stod(r.out.substr(last_comma + 1));
    CHECK(std::abs(rho - 0.5) < 0.1);
    CHECK(fs::exists("cli_demo_out/effective_config.json"));
    fs::remove_all("cli_demo_out");
}

TEST_CASE("cli is deterministic under a fixed seed", "[cli]") {
    const std::string base = "estimate --config " + config_path("discrete_demo.json") +
                             " --estimator gns --out-dir cli_det_out --quiet";
    const auto a = run_cli(base + " --seed 99");
    const auto b = run_cli(base + " --seed 99");
    const auto c = run_cli(base + " --seed 100");
    REQUIRE(a.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out != c.out);
    fs::remove_all("cli_det_out");
}

TEST_CASE("cli reports config errors with exit code 2", "[cli]") {
    CHECK(run_cli("estimate --config /nonexistent.json --estimator gns").exit_code == 2);
    CHECK(run_cli("experiment --config " + config_path("smoke.json") + " --study nosuch")
              .exit_code == 2);

    // a config missing a required section mentions the field path on stderr
    std::ofstream bad("cli_bad_config.json");
    bad << R"({"problem":"market","model":{"assets":1,"s0":[100],"mu":0.05,"r":0.02,)"
        << R"("grid":{"T":1.0,"steps":10,"horizon_index":2}},)"
        << R"("portfolio":{"instruments":[{"kind":"european_call","strike":100}]}})";
    bad.close();
    const auto r = run_cli("estimate --config cli_bad_config.json --estimator gns");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("model.vol") != std::string::npos);
    fs::remove("cli_bad_config.json");
}

TEST_CASE("experiment subcommand writes the study artifacts", "[cli]") {
    const auto r = run_cli("experiment --config " + config_path("smoke.json") +
                           " --study table1 --out-dir cli_exp_out --quiet");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists("cli_exp_out/table1_report.csv"));
    const std::string csv = slurp("cli_exp_out/table1_report.csv");
    CHECK(csv.rfind("estimator,risk_fn,budget,n,m,", 0) == 0);
    // 3 budgets x 2 risk functions plus the header
    std::size_t lines = 0;
    for (char ch : csv) lines += (ch == '\n');
    CHECK(lines == 7);
    CHECK(fs::exists("cli_exp_out/effective_config.json"));
    fs::remove_all("cli_exp_out");
}

TEST_CASE("convergence experiment writes slope files", "[cli]") {
    const auto r = run_cli("experiment --config " + config_path("smoke.json") +
                           " --study convergence --out-dir cli_conv_out --quiet");
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists("cli_conv_out/convergence_gns_indicator.csv"));
    CHECK(fs::exists("cli_conv_out/convergence_sns_quadratic.csv"));
    const std::string csv = slurp("cli_conv_out/convergence_gns_quadratic.csv");
    CHECK(csv.rfind("budget,mse_rel,slope_fit\n", 0) == 0);
    fs::remove_all("cli_conv_out");
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ips/cli.hpp"

using namespace ips;
using cli::json;

namespace {

std::string output(const cli::RunResult& r, const std::string& name) {
    for (const auto& o : r.outputs)
        if (o.name == name) return o.content;
    return {};
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// Unsets IPS_SEED for the lifetime of a test and restores it afterwards.
class SeedEnv {
public:
    SeedEnv() {
        if (const char* v = std::getenv("IPS_SEED")) saved_ = v;
        unsetenv("IPS_SEED");
    }
    ~SeedEnv() {
        if (saved_) setenv("IPS_SEED", saved_->c_str(), 1);
        else unsetenv("IPS_SEED");
    }

private:
    std::optional<std::string> saved_;
};

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ips_cli_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Cli, UnknownKeyIsAConfigError) {
    SeedEnv env;
    const auto r = cli::execute({{"command", "simulate"}, {"model", "contact"}, {"lambda", 2}, {"bogus", 1}});
    EXPECT_EQ(r.exit_code, cli::Exit::config_error);
    EXPECT_EQ(r.report["error"], "config");
    EXPECT_NE(r.report["message"].get<std::string>().find("bogus"), std::string::npos);
    EXPECT_TRUE(r.outputs.empty());
}

TEST(Cli, MalformedConfigsAreConfigErrors) {
    SeedEnv env;
    const std::vector<json> bad = {
        json::array(),
        {{"model", "contact"}},
        {{"command", "nope"}},
        {{"command", "simulate"}, {"model", "nosuch"}},
        {{"command", "simulate"}, {"model", "contact"}, {"lambda", "two"}},
        {{"command", "simulate"}, {"model", "contact"}, {"lambda", -1.0}},
        {{"command", "simulate"}, {"model", "contact"}, {"replicas", -3}},
        {{"command", "simulate"}, {"model", "contact"}, {"seed", -1}},
        {{"command", "simulate"}, {"model", "contact"}, {"threads", 0}},
        {{"command", "theta-curve"}, {"lambdas", "2:1:0.1"}},
        {{"command", "theta-curve"}, {"lambdas", json::array({2.0, 1.0})}},
        {{"command", "duality-check"}, {"pair", "coop_death:additive"}, {"q", 0}},
        {{"command", "couple"}, {"kind", "sideways"}},
        {{"command", "couple"}, {"kind", "lambda"}, {"lambda1", 3.0}, {"lambda2", 1.0}},
        {{"command", "kdep"}, {"field", "phi"}, {"p", 0.5}},
        {{"command", "compare"}, {"side", 10}, {"ring", 5}},
    };
    for (const auto& c : bad) EXPECT_EQ(cli::execute(c).exit_code, cli::Exit::config_error) << c.dump();
}

TEST(Cli, GridParsing) {
    EXPECT_EQ(cli::parse_grid(json("0:1:0.25"), "g"), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
    EXPECT_EQ(cli::parse_grid(json(2.5), "g"), (std::vector<double>{2.5}));
    EXPECT_EQ(cli::parse_grid(json::array({1, 2}), "g"), (std::vector<double>{1, 2}));
    const auto g = cli::parse_grid(json("0:6:0.05"), "g");
    EXPECT_EQ(g.size(), 121u);
    EXPECT_EQ(g[61], 3.05);
    EXPECT_THROW(cli::parse_grid(json("1:x:2"), "g"), cli::ConfigError);
    EXPECT_THROW(cli::parse_grid(json("0:1:0"), "g"), cli::ConfigError);
}

TEST(Cli, CsvHasHeaderAndManifestComment) {
    SeedEnv env;
    const auto r = cli::execute({{"command", "simulate"}, {"model", "voter"}, {"d", 1}, {"L", 20}, {"T", 2.0}, {"replicas", 5},
                                 {"samples", 4}});
    ASSERT_EQ(r.exit_code, cli::Exit::ok);
    const auto ls = lines(output(r, "simulate.csv"));
    ASSERT_EQ(ls.size(), 6u);
    EXPECT_EQ(ls.front(), "t,mean,ci_lo,ci_hi");
    EXPECT_EQ(ls.back(), "# manifest: manifest.json");
}

TEST(Cli, EnvironmentSeedOverridesConfig) {
    SeedEnv env;
    const json base = {{"command", "simulate"}, {"model", "contact"}, {"lambda", 2.0}, {"d", 1}, {"L", 101},
                       {"T", 10.0}, {"replicas", 20}, {"observable", "density"}};
    auto with_seed = [&](int s) {
        auto c = base;
        c["seed"] = s;
        return c;
    };
    const auto seven = output(cli::execute(with_seed(7)), "simulate.csv");
    const auto eight = output(cli::execute(with_seed(8)), "simulate.csv");
    EXPECT_NE(seven, eight);
    setenv("IPS_SEED", "7", 1);
    EXPECT_EQ(output(cli::execute(with_seed(8)), "simulate.csv"), seven);
    EXPECT_EQ(cli::effective_seed(with_seed(8)), 7u);
    for (const char* bad : {"x7", "-1", "7x", "99999999999999999999"}) {
        setenv("IPS_SEED", bad, 1);
        EXPECT_EQ(cli::execute(with_seed(8)).exit_code, cli::Exit::config_error) << bad;
    }
    unsetenv("IPS_SEED");
    EXPECT_EQ(cli::effective_seed(base), 1u);
    auto big = base;
    big["seed"] = std::uint64_t{18446744073709551615ULL};
    EXPECT_EQ(cli::effective_seed(big), 18446744073709551615ULL);
}

TEST(Cli, RunWritesOutputsAndManifest) {
    SeedEnv env;
    const auto dir = scratch("manifest");
    const json config = {{"command", "percolation"}, {"p", "0.5:0.9:0.2"}, {"n", 20}, {"replicas", 50},
                         {"seed", 3},           {"out", dir.string()}};
    const auto r = cli::run(config);
    ASSERT_EQ(r.exit_code, cli::Exit::ok);
    ASSERT_TRUE(std::filesystem::exists(dir / "percolation.csv"));
    ASSERT_TRUE(std::filesystem::exists(dir / "manifest.json"));
    for (const auto& e : std::filesystem::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
    std::ifstream in(dir / "manifest.json");
    const auto m = json::parse(in);
    EXPECT_EQ(m["seed"], 3);
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_EQ(m["version"], ips::version);
    EXPECT_EQ(m["config"], config);
    EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
    EXPECT_TRUE(m.contains("wall_seconds"));
    std::ifstream csv(dir / "percolation.csv");
    std::stringstream text;
    text << csv.rdbuf();
    EXPECT_EQ(text.str(), output(r, "percolation.csv"));
    EXPECT_EQ(lines(text.str()).size(), 1u + 3u + 1u);
    std::filesystem::remove_all(dir);
}

TEST(Cli, ConfigErrorWritesNothing) {
    SeedEnv env;
    const auto dir = scratch("error");
    const auto r = cli::run({{"command", "simulate"}, {"model", "contact"}, {"oops", true}, {"out", dir.string()}});
    EXPECT_EQ(r.exit_code, cli::Exit::config_error);
    EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Cli, DeterministicAcrossThreadCounts) {
    SeedEnv env;
    const std::vector<json> configs = {
        {{"command", "simulate"}, {"model", "contact"}, {"lambda", 1.8}, {"d", 1}, {"L", 101}, {"T", 20.0}, {"replicas", 64}},
        {{"command", "simulate"}, {"model", "voter"}, {"d", 2}, {"L", 10}, {"T", 5.0}, {"replicas", 16},
         {"observable", "clusters"}, {"p", 0.5}},
        {{"command", "couple"}, {"kind", "ann-coal"}, {"L", 21}, {"T", 5.0}, {"replicas", 16}},
        {{"command", "meanfield"}, {"family", "contact"}, {"lambda", 2.0}, {"x0", 0.5}, {"T", 2.0}, {"N", 100},
         {"replicas", 16}},
    };
    for (const auto& base : configs) {
        std::vector<std::vector<cli::Output>> runs;
        for (int t : {1, 4, 8}) {
            auto c = base;
            c["threads"] = t;
            const auto r = cli::execute(c);
            ASSERT_EQ(r.exit_code, cli::Exit::ok) << c.dump() << r.report.dump();
            runs.push_back(r.outputs);
        }
        for (std::size_t k = 1; k < runs.size(); ++k) {
            ASSERT_EQ(runs[k].size(), runs[0].size());
            for (std::size_t f = 0; f < runs[0].size(); ++f) EXPECT_EQ(runs[k][f].content, runs[0][f].content) << base.dump();
        }
    }
}

TEST(Cli, DualityCheckReportsPass) {
    SeedEnv env;
    const auto r = cli::execute(
        {{"command", "duality-check"}, {"pair", "contact:self"}, {"q", 0}, {"sites", 20}, {"T", 5.0}, {"seeds", 200}});
    EXPECT_EQ(r.exit_code, cli::Exit::ok) << r.report.dump();
    EXPECT_FALSE(output(r, "duality.csv").empty());
    const auto g = cli::execute({{"command", "duality-check"}, {"pair", "contact_voter:generator"}, {"lambda", 2.0},
                                 {"gamma", 0.5}, {"sites", 4}});
    EXPECT_EQ(g.exit_code, cli::Exit::ok) << g.report.dump();
}

TEST(Cli, EveryCouplingHolds) {
    SeedEnv env;
    for (const std::string kind : {"lambda", "ann-coal", "double-death", "dim-embed"}) {
        const auto r = cli::execute({{"command", "couple"}, {"kind", kind}, {"L", 15}, {"T", 3.0}, {"replicas", 20}});
        EXPECT_EQ(r.exit_code, cli::Exit::ok) << kind << " " << r.report.dump();
        EXPECT_EQ(r.report["order_held"], 20) << kind;
    }
}

TEST(Cli, MeanfieldBifurcation) {
    SeedEnv env;
    const auto r = cli::execute({{"command", "meanfield"}, {"family", "ising"}, {"bifurcation", "0:6:0.05"}});
    ASSERT_EQ(r.exit_code, cli::Exit::ok) << r.report.dump();
    const auto ls = lines(output(r, "bifurcation.csv"));
    ASSERT_GT(ls.size(), 2u);
    EXPECT_EQ(ls.front(), "parameter,fixed_point,stability");
    // One point for beta <= 2 (41 values) and three above (80 values).
    EXPECT_EQ(ls.size(), 1u + 41u + 3u * 80u + 1u);
}

TEST(Cli, KdepAndCompareRun) {
    SeedEnv env;
    const auto k = cli::execute({{"command", "kdep"}, {"field", "phi"}, {"p", 0.9}, {"indices", 20000}});
    EXPECT_EQ(k.exit_code, cli::Exit::ok) << k.report.dump();
    const auto c = cli::execute({{"command", "compare"}, {"lambda", 10.0}, {"T", 0.3}, {"side", 12}});
    EXPECT_EQ(c.exit_code, cli::Exit::ok) << c.report.dump();
    EXPECT_FALSE(output(c, "bonds.csv").empty());
}

TEST(Cli, ThetaCurveWithCriticalBracket) {
    SeedEnv env;
    const auto r = cli::execute({{"command", "theta-curve"}, {"lambdas", "1:2.6:0.4"}, {"d", 1}, {"L", 101}, {"T", 30.0},
                                 {"replicas", 100}, {"lambda_c", {{"lo", 1.0}, {"hi", 2.6}, {"tol", 0.2}}}});
    ASSERT_EQ(r.exit_code, cli::Exit::ok) << r.report.dump();
    EXPECT_EQ(lines(output(r, "theta_curve.csv")).size(), 1u + 5u + 1u);
    EXPECT_FALSE(output(r, "lambda_c.csv").empty());
}

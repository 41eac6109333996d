// Command-line front end: flags are folded into the JSON config, overriding --config.
// Unrecognized flags pass through, so `--lambda 2` sets config["lambda"] = 2.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ips/cli.hpp"

using ips::cli::json;

namespace {

// "key=value" where value is parsed as JSON when possible and kept as a string otherwise.
void apply_setting(json& config, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ips::cli::ConfigError("--set expects key=value, got '" + kv + "'");
    const auto key = kv.substr(0, eq), text = kv.substr(eq + 1);
    auto v = json::parse(text, nullptr, false);
    config[key] = v.is_discarded() ? json(text) : v;
}

int fail_config(const std::string& message) {
    std::cerr << json{{"error", "config"}, {"message", message}}.dump() << "\n";
    return ips::cli::Exit::config_error;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interacting particle systems: simulations, duality checks and comparisons"};
    app.require_subcommand(1);
    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::vector<std::string> settings;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "run a model and record survival, magnetization, density or clusters"},
        {"theta-curve", "survival proxy over a grid of infection rates"},
        {"meanfield", "mean-field ODE, fixed points, bifurcations and finite-N chains"},
        {"duality-check", "pathwise or generator duality checks"},
        {"percolation", "oriented percolation survival and Peierls bounds"},
        {"kdep", "coupling a K-dependent field to i.i.d. Bernoulli variables"},
        {"compare", "contact process to oriented percolation comparison"},
        {"couple", "monotone couplings driven by shared events"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config_path, "JSON config file");
        sub->add_option("-o,--out", out, "output directory");
        sub->add_option("--seed", seed, "master seed (IPS_SEED overrides)");
        sub->add_option("-j,--threads", threads, "worker threads");
        sub->add_option("-s,--set", settings, "extra config entry key=value");
        sub->allow_extras();
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail_config(e.what());
    }

    json config = json::object();
    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) return fail_config("cannot read " + config_path);
            config = json::parse(in);
            if (!config.is_object()) return fail_config("config must be a JSON object");
        }
        config["command"] = app.get_subcommands().front()->get_name();
        if (!out.empty()) config["out"] = out;
        if (seed) config["seed"] = *seed;
        if (threads) config["threads"] = *threads;
        for (const auto& kv : settings) apply_setting(config, kv);
        // Any other "--key value" or "--key=value" pair becomes a config entry.
        const auto extras = app.get_subcommands().front()->remaining();
        for (std::size_t k = 0; k < extras.size(); ++k) {
            const auto& a = extras[k];
            if (a.rfind("--", 0) != 0 || a.size() < 3) throw ips::cli::ConfigError("unexpected argument '" + a + "'");
            auto kv = a.substr(2);
            if (kv.find('=') == std::string::npos) {
                if (k + 1 >= extras.size()) throw ips::cli::ConfigError("flag '" + a + "' needs a value");
                kv += "=" + extras[++k];
            }
            apply_setting(config, kv);
        }
    } catch (const json::exception& e) {
        return fail_config(e.what());
    } catch (const ips::cli::ConfigError& e) {
        return fail_config(e.what());
    }

    const auto result = ips::cli::run(config);
    if (result.exit_code == ips::cli::Exit::config_error) {
        std::cerr << result.report.dump() << "\n";
    } else if (result.exit_code == ips::cli::Exit::violation) {
        std::cerr << json{{"error", "invariant"}, {"counterexample", result.report}}.dump(2) << "\n";
    } else {
        std::cout << result.report.dump(2) << "\n";
    }
    return result.exit_code;
}

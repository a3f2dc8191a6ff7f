#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdiqds/scenario.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format;
    std::string preset;
    std::optional<double> scale;
    std::optional<double> n_sig;
    bool replay = false;
    bool no_search = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Scenario JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--out", f.out, "Output file (default stdout)");
    cmd->add_option("--format", f.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--preset", f.preset, "Detector preset: standard, InGaAs APD, InGaAs/InP APD, SNSPD");
    cmd->add_option("--scale", f.scale, "Divide pulse budgets by this factor");
}

nlohmann::json read_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw mdiqds::ScenarioError(path + ": invalid JSON: " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Signature-length analysis and simulation for MDI quantum digital signatures"};
    app.require_subcommand(1);
    Flags f;

    auto* analytic = app.add_subcommand("analytic", "Security report from the analytic model or a replay");
    add_common(analytic, f);
    analytic->add_option("--n-sig", f.n_sig, "Evaluate at this pulse count instead of searching");
    analytic->add_flag("--replay", f.replay, "Replay the published worked-example inputs");

    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo key generation and estimation");
    add_common(simulate, f);
    simulate->add_option("--n-sig", f.n_sig, "Full-scale pulse count before --scale");

    auto* protocol = app.add_subcommand("protocol", "Signature protocol experiments");
    add_common(protocol, f);

    auto* tables = app.add_subcommand("tables", "Raw-key-time tables");
    add_common(tables, f);
    tables->add_flag("--no-search", f.no_search, "Skip the analytic N_sig search");

    CLI11_PARSE(app, argc, argv);

    try {
        nlohmann::json config = read_config(f.config);
        if (analytic->parsed()) config["mode"] = "analytic";
        if (simulate->parsed()) config["mode"] = "montecarlo";
        if (protocol->parsed()) config["mode"] = "protocol";
        if (tables->parsed()) config["mode"] = "table-sweep";
        if (f.seed) config["seed"] = *f.seed;
        if (!f.format.empty()) config["format"] = f.format;
        if (!f.preset.empty()) config["preset"] = f.preset;
        if (f.scale) config["scale_factor"] = *f.scale;
        if (f.n_sig) config["N_sig"] = *f.n_sig;
        if (f.replay && !config.contains("replay")) config["replay"] = nlohmann::json::object();
        if (f.no_search) config["model_search"] = false;

        const mdiqds::Scenario scenario = mdiqds::parse_scenario(config);
        const mdiqds::RunOutput output = mdiqds::run(scenario);
        if (f.out.empty()) {
            mdiqds::write_output(std::cout, output, scenario.format);
        } else {
            std::ofstream file(f.out);
            if (!file) {
                std::cerr << "error: cannot write " << f.out << '\n';
                return 1;
            }
            mdiqds::write_output(file, output, scenario.format);
        }
        if (output.json.contains("diagnostic")) std::cerr << "note: " << output.json["diagnostic"].get<std::string>() << '\n';
        return output.exit_code;
    } catch (const mdiqds::ScenarioError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return mdiqds::kExitValidation;
    } catch (const mdiqds::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return mdiqds::kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

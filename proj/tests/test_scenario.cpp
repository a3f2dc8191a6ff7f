#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mdiqds/scenario.hpp"

using namespace mdiqds;
using nlohmann::json;

namespace {

std::string error_of(const json& config) {
    try {
        parse_scenario(config).validate();
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return "";
}

std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / "mdiqds_scenario_test";
    std::filesystem::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const std::string& out_file) {
    const std::string cmd = std::string("\"") + MDIQDS_CLI + "\" " + args + " > \"" + out_file + "\" 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Presets, TableValues) {
    const auto& presets = detector_presets();
    ASSERT_EQ(presets.size(), 4u);
    const DetectorPreset& snspd = find_preset("SNSPD");
    EXPECT_DOUBLE_EQ(snspd.eta_d, 0.93);
    EXPECT_DOUBLE_EQ(snspd.y0, 1e-6);
    EXPECT_DOUBLE_EQ(find_preset("standard").table[0].n_sig, 5.58e12);
    EXPECT_DOUBLE_EQ(find_preset("InGaAs/InP APD").y0, 500e-6);
    EXPECT_THROW(find_preset("photomultiplier"), ScenarioError);
}

TEST(ParseScenario, Defaults) {
    const Scenario s = parse_scenario(json::object());
    EXPECT_EQ(s.mode, Mode::analytic);
    EXPECT_EQ(s.preset, "standard");
    EXPECT_DOUBLE_EQ(s.profile.detector_efficiency, 0.145);
    EXPECT_DOUBLE_EQ(s.profile.dark_count_prob, 6.02e-6);
    EXPECT_DOUBLE_EQ(s.profile.distance_km, 50.0);
    EXPECT_DOUBLE_EQ(s.options.budget.eps_PE, 1e-5);
    EXPECT_DOUBLE_EQ(s.options.budget.g, 1e-5);
    EXPECT_FALSE(s.seed.has_value());
    EXPECT_NO_THROW(s.validate());
}

TEST(ParseScenario, PresetThenExplicitFields) {
    Scenario s = parse_scenario({{"preset", "SNSPD"}});
    EXPECT_DOUBLE_EQ(s.profile.detector_efficiency, 0.93);
    EXPECT_DOUBLE_EQ(s.profile.dark_count_prob, 1e-6);
    s = parse_scenario({{"preset", "SNSPD"}, {"profile", {{"detector_efficiency", 0.5}}}});
    EXPECT_DOUBLE_EQ(s.profile.detector_efficiency, 0.5);
    EXPECT_DOUBLE_EQ(s.profile.dark_count_prob, 1e-6);
    s = parse_scenario({{"source", {{"intensities", {0.5, 0.1, 0.01}}}}, {"budget", {{"eps", 1e-3}}}});
    EXPECT_DOUBLE_EQ(s.alice_source.intensities[0], 0.5);
    EXPECT_DOUBLE_EQ(s.peer_source.intensities[0], 0.5);
    EXPECT_DOUBLE_EQ(s.options.budget.eps_ab, 1e-3);
}

TEST(ParseScenario, RangeErrorsNameTheField) {
    EXPECT_EQ(error_of({{"profile", {{"detector_efficiency", 1.5}}}}).rfind("profile.detector_efficiency", 0), 0u);
    EXPECT_EQ(error_of({{"bogus", 1}}), "bogus: unknown field");
    EXPECT_EQ(error_of({{"profile", {{"bogus", 1}}}}), "profile.bogus: unknown field");
    EXPECT_EQ(error_of({{"mode", "montecarlo"}}).rfind("seed", 0), 0u);
    EXPECT_EQ(error_of({{"mode", "sideways"}}).rfind("mode", 0), 0u);
    EXPECT_EQ(error_of({{"scale_factor", 0.5}}).rfind("scale_factor", 0), 0u);
    EXPECT_EQ(error_of({{"profile", {{"distance_km", "far"}}}}).rfind("profile.distance_km", 0), 0u);
    EXPECT_EQ(error_of({{"preset", "nope"}}).rfind("preset", 0), 0u);
    EXPECT_EQ(error_of({{"mode", "montecarlo"}, {"seed", 1}}), "");
}

TEST(TableArithmetic, AllRowsMatchPrintedPrecision) {
    const auto rows = table_arithmetic();
    ASSERT_EQ(rows.size(), 8u);
    for (const auto& row : rows) {
        EXPECT_TRUE(row.matches) << row.detector << " " << row.minutes;
        const double unit = std::pow(10.0, -row.printed.decimals);
        EXPECT_NEAR(std::floor(row.minutes / unit + 1e-9) * unit, row.printed.minutes, 1e-9);
    }
}

TEST(Run, ReplayIsDeterministic) {
    const Scenario s = parse_scenario({{"replay", json::object()}});
    const RunOutput a = run(s);
    const RunOutput b = run(s);
    EXPECT_EQ(a.exit_code, kExitOk);
    EXPECT_EQ(a.json.dump(2), b.json.dump(2));
    EXPECT_NEAR(a.json["report"]["E_bar"].get<double>(), 0.0239, 5e-4);
    EXPECT_EQ(a.json["report"]["pr_honest_abort"].get<double>(), 2e-5);
    std::ostringstream csv;
    write_output(csv, a, OutputFormat::csv);
    EXPECT_EQ(csv.str().rfind("detector,eta_D,Y_0,N_sig,t_r_minutes\nstandard,0.145,", 0), 0u);
}

TEST(Run, ProtocolModeDeterministicForSeed) {
    const json config{{"mode", "protocol"}, {"seed", 3}, {"protocol", {{"trials", 300}}}};
    const RunOutput a = run(parse_scenario(config));
    const RunOutput b = run(parse_scenario(config));
    EXPECT_EQ(a.exit_code, kExitOk);
    EXPECT_EQ(a.json.dump(), b.json.dump());
    EXPECT_EQ(a.json["experiments"].size(), 3u);
}

TEST(Cli, ExitCodesAndOutput) {
    const auto dir = scratch_dir();
    const auto out = (dir / "out.json").string();

    EXPECT_EQ(run_cli("analytic --replay", out), kExitOk);
    const json report = json::parse(slurp(out));
    EXPECT_EQ(report["mode"], "analytic");
    const std::string first = slurp(out);
    EXPECT_EQ(run_cli("analytic --replay", out), kExitOk);
    EXPECT_EQ(slurp(out), first);

    const auto bad = dir / "bad.json";
    std::ofstream(bad) << R"({"profile": {"detector_efficiency": 1.5}})";
    EXPECT_EQ(run_cli("analytic --config \"" + bad.string() + "\"", out), kExitValidation);
    const auto broken = dir / "broken.json";
    std::ofstream(broken) << "{not json";
    EXPECT_EQ(run_cli("analytic --config \"" + broken.string() + "\"", out), kExitValidation);
    EXPECT_EQ(run_cli("simulate", out), kExitValidation);

    // too few pulses for a feasible signature: infeasible exit code
    EXPECT_EQ(run_cli("analytic --n-sig 1e8", out), kExitInfeasible);
    EXPECT_EQ(run_cli("tables --no-search --format csv", out), kExitOk);
    EXPECT_EQ(slurp(out).substr(0, 9), "security_");

    const auto cfg = dir / "protocol.json";
    std::ofstream(cfg) << R"({"protocol": {"trials": 200}})";
    EXPECT_EQ(run_cli("protocol --seed 4 --config \"" + cfg.string() + "\" --out \"" + (dir / "p1.json").string() + "\"", out),
              kExitOk);
    EXPECT_EQ(run_cli("protocol --seed 4 --config \"" + cfg.string() + "\" --out \"" + (dir / "p2.json").string() + "\"", out),
              kExitOk);
    EXPECT_EQ(slurp(dir / "p1.json"), slurp(dir / "p2.json"));
    EXPECT_FALSE(slurp(dir / "p1.json").empty());
}

TEST(Cli, SimulateAtReducedScale) {
    const auto out = (scratch_dir() / "sim.json").string();
    EXPECT_EQ(run_cli("simulate --preset SNSPD --seed 9 --scale 1e5", out), kExitOk);
    const json j = json::parse(slurp(out));
    EXPECT_EQ(j["pulses"], 980000);
    EXPECT_TRUE(j["checks_pass"].get<bool>());
}

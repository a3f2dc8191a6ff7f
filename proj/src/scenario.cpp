#include "mdiqds/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <type_traits>

#include "mdiqds/entropy_math.hpp"
#include "mdiqds/json_io.hpp"
#include "mdiqds/signature_protocol.hpp"

namespace mdiqds {

using nlohmann::json;

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::analytic: return "analytic";
        case Mode::montecarlo: return "montecarlo";
        case Mode::protocol: return "protocol";
        case Mode::table_sweep: return "table-sweep";
    }
    return "?";
}

std::string_view to_string(OutputFormat format) { return format == OutputFormat::json ? "json" : "csv"; }

const std::vector<DetectorPreset>& detector_presets() {
    static const std::vector<DetectorPreset> presets{
        {"standard", 0.145, 6.02e-6, "Ursin2007", {{{5.58e12, 93.0, 0}, {10.5e12, 175.0, 0}}}},
        {"InGaAs APD", 0.30, 130e-6, "Comandar2015", {{{1.8e12, 30.0, 0}, {3.35e12, 55.83, 2}}}},
        {"InGaAs/InP APD", 0.55, 500e-6, "Comandar2015b", {{{0.87e12, 14.5, 1}, {1.63e12, 27.1, 1}}}},
        {"SNSPD", 0.93, 1e-6, "Marsili2013", {{{0.098e12, 1.6, 1}, {0.18e12, 3.0, 0}}}},
    };
    return presets;
}

const DetectorPreset& find_preset(std::string_view name) {
    std::string known;
    for (const auto& p : detector_presets()) {
        if (p.name == name) return p;
        known += (known.empty() ? "" : ", ") + p.name;
    }
    throw ScenarioError("preset: unknown detector '" + std::string(name) + "' (known: " + known + ")");
}

ErrorBudget table_budget(SecurityLevel level) {
    if (level == SecurityLevel::order_1e5) return ErrorBudget::uniform(1e-10, 1e-5, 1e-5);
    ErrorBudget b = ErrorBudget::uniform(1e-12, 1e-10, 1e-10);
    b.eps_k = 1e-20;
    return b;
}

double table_target(SecurityLevel level) { return level == SecurityLevel::order_1e5 ? 1e-4 : 1e-9; }

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ScenarioError(path + ": " + what); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
    const std::set<std::string> names(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
        if (!names.count(key)) fail(join(path, key), "unknown field");
    }
}

void read(const json& obj, const std::string& path, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(join(path, key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(join(path, key), "must be finite");
}

template <typename T>
    requires std::is_unsigned_v<T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    // integral values of any JSON number kind, so 1e4 and 10000 both work
    const bool integral = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0) ||
                          (v.is_number_float() && v.get<double>() >= 0.0 && v.get<double>() <= 0x1p53 &&
                           std::floor(v.get<double>()) == v.get<double>());
    if (!integral) fail(join(path, key), "expected a non-negative integer");
    out = v.is_number_float() ? static_cast<T>(v.get<double>()) : v.get<T>();
    if (static_cast<double>(out) != v.get<double>()) fail(join(path, key), "out of range");
}

void read(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(join(path, key), "expected true or false");
    out = v.get<bool>();
}

template <std::size_t N>
void read(const json& obj, const std::string& path, const char* key, std::array<double, N>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != N) fail(join(path, key), "expected an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) {
        if (!v[i].is_number()) fail(join(path, key) + "[" + std::to_string(i) + "]", "expected a number");
        out[i] = v[i].get<double>();
    }
}

std::string read_string(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(join(path, key), "expected a string");
    return v.get<std::string>();
}

void parse_source(const json& j, const std::string& path, DecoySourceConfig& s) {
    check_keys(j, path, {"intensities", "intensity_probs", "basis_probs", "pulse_rate"});
    read(j, path, "intensities", s.intensities);
    read(j, path, "intensity_probs", s.intensity_probs);
    read(j, path, "basis_probs", s.basis_probs);
    read(j, path, "pulse_rate", s.pulse_rate);
}

void parse_profile(const json& j, const std::string& path, SystemProfile& p) {
    check_keys(j, path,
               {"distance_km", "loss_db_per_km", "detector_efficiency", "dark_count_prob", "misalignment",
                "alice_link_share"});
    read(j, path, "distance_km", p.distance_km);
    read(j, path, "loss_db_per_km", p.loss_db_per_km);
    read(j, path, "detector_efficiency", p.detector_efficiency);
    read(j, path, "dark_count_prob", p.dark_count_prob);
    read(j, path, "misalignment", p.misalignment);
    read(j, path, "alice_link_share", p.alice_link_share);
}

void parse_budget(const json& j, const std::string& path, ErrorBudget& b) {
    check_keys(j, path,
               {"eps", "eps_PE", "eps_k", "eps_k_smooth", "eps_ab", "eps_hat_ab", "eps_tilde_ab", "eps_0", "eps_1",
                "eps_k0_serfling", "eps_k1_serfling", "eps_ke_sampling", "g"});
    if (j.contains("eps")) {
        double eps = 0.0;
        read(j, path, "eps", eps);
        if (!(eps > 0.0 && eps <= 1.0)) fail(join(path, "eps"), "must lie in (0,1]");
        b = ErrorBudget::uniform(eps, b.eps_PE, b.g);
    }
    read(j, path, "eps_PE", b.eps_PE);
    read(j, path, "eps_k", b.eps_k);
    read(j, path, "eps_k_smooth", b.eps_k_smooth);
    read(j, path, "eps_ab", b.eps_ab);
    read(j, path, "eps_hat_ab", b.eps_hat_ab);
    read(j, path, "eps_tilde_ab", b.eps_tilde_ab);
    read(j, path, "eps_0", b.eps_0);
    read(j, path, "eps_1", b.eps_1);
    read(j, path, "eps_k0_serfling", b.eps_k0_serfling);
    read(j, path, "eps_k1_serfling", b.eps_k1_serfling);
    read(j, path, "eps_ke_sampling", b.eps_ke_sampling);
    read(j, path, "g", b.g);
}

ReplayInputs parse_replay(const json& j, const std::string& path) {
    check_keys(j, path, {"e_obs", "n_k", "r_k", "c_k0", "c_k1", "e_k1", "N_sig", "pulse_rate"});
    ReplayInputs r;
    read(j, path, "e_obs", r.e_obs);
    read(j, path, "n_k", r.n_k);
    read(j, path, "r_k", r.r_k);
    read(j, path, "c_k0", r.c_k0);
    read(j, path, "c_k1", r.c_k1);
    read(j, path, "e_k1", r.e_k1);
    read(j, path, "N_sig", r.N_sig);
    read(j, path, "pulse_rate", r.pulse_rate);
    return r;
}

void parse_protocol(const json& j, const std::string& path, ProtocolSettings& p) {
    check_keys(j, path, {"L", "R", "error_rate", "eps_PE", "p_E", "trials"});
    read(j, path, "L", p.L);
    read(j, path, "R", p.R);
    read(j, path, "error_rate", p.error_rate);
    read(j, path, "eps_PE", p.eps_PE);
    read(j, path, "p_E", p.p_E);
    read(j, path, "trials", p.trials);
}

Mode parse_mode(const std::string& s) {
    if (s == "analytic") return Mode::analytic;
    if (s == "montecarlo") return Mode::montecarlo;
    if (s == "protocol") return Mode::protocol;
    if (s == "table-sweep") return Mode::table_sweep;
    fail("mode", "expected analytic, montecarlo, protocol or table-sweep");
}

/// Re-throws a module validation message under the scenario field path.
template <typename F>
void scoped(const std::string& path, F&& validate) {
    try {
        validate();
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(path + "." + e.what());
    }
}

bool unit_open(double p) { return p > 0.0 && p <= 1.0; }

}  // namespace

void Scenario::validate() const {
    scoped("alice_source", [&] { alice_source.validate(); });
    scoped("peer_source", [&] { peer_source.validate(); });
    scoped("profile", [&] { profile.validate(); });
    scoped("budget", [&] { options.budget.validate(); });
    if (!(options.r_fraction > 0.0 && options.r_fraction < 1.0)) fail("pipeline.r_fraction", "must lie in (0,1)");
    if (!(options.zeta >= 1.0)) fail("pipeline.zeta", "must be >= 1");
    if (!unit_open(target_security)) fail("target_security", "must lie in (0,1]");
    if (!(scale_factor >= 1.0)) fail("scale_factor", "must be >= 1");
    if (n_sig && !(*n_sig >= 1.0)) fail("N_sig", "must be >= 1");
    if ((mode == Mode::montecarlo || mode == Mode::protocol) && !seed) {
        fail("seed", "required for " + std::string(to_string(mode)) + " mode");
    }
    if (mode == Mode::montecarlo && n_sig && *n_sig / scale_factor < 1.0) fail("scale_factor", "leaves no pulses");
    if (replay) {
        const ReplayInputs& r = *replay;
        if (!(r.e_obs >= 0.0 && r.e_obs <= 1.0)) fail("replay.e_obs", "must lie in [0,1]");
        if (!(r.r_k >= 1.0 && r.n_k / 2.0 >= r.r_k)) fail("replay.r_k", "need 1 <= r_k <= n_k/2");
        if (!(r.c_k0 >= 0.0 && r.c_k1 >= 0.0 && r.c_k0 + r.c_k1 <= 1.0)) {
            fail("replay.c_k1", "need c_k0, c_k1 >= 0 and c_k0 + c_k1 <= 1");
        }
        if (!(r.e_k1 >= 0.0 && r.e_k1 <= 0.5)) fail("replay.e_k1", "must lie in [0,0.5]");
        if (!(r.N_sig > 0.0 && r.pulse_rate > 0.0)) fail("replay.N_sig", "N_sig and pulse_rate must be positive");
    }
    if (mode == Mode::protocol) {
        const ProtocolSettings& p = protocol;
        if (p.L == 0 || p.L % 2 != 0) fail("protocol.L", "must be even and positive");
        if (p.R == 0 || p.R > p.L / 2) fail("protocol.R", "need 1 <= R <= L/2");
        if (!(p.error_rate >= 0.0 && p.error_rate < 0.5)) fail("protocol.error_rate", "must lie in [0,0.5)");
        if (!unit_open(p.eps_PE)) fail("protocol.eps_PE", "must lie in (0,1]");
        if (!(p.p_E > 0.0 && p.p_E <= 0.5)) fail("protocol.p_E", "must lie in (0,0.5]");
        if (p.trials == 0) fail("protocol.trials", "must be positive");
    }
}

Scenario parse_scenario(const json& config) {
    check_keys(config, "",
               {"mode", "preset", "seed", "format", "scale_factor", "target_security", "N_sig", "source",
                "alice_source", "peer_source", "profile", "budget", "pipeline", "replay", "protocol", "model_search"});
    Scenario s;
    s.mode = parse_mode(read_string(config, "", "mode", "analytic"));
    s.preset = read_string(config, "", "preset", s.preset);
    const DetectorPreset& preset = find_preset(s.preset);
    s.profile.detector_efficiency = preset.eta_d;
    s.profile.dark_count_prob = preset.y0;

    const std::string format = read_string(config, "", "format", "json");
    if (format == "json") {
        s.format = OutputFormat::json;
    } else if (format == "csv") {
        s.format = OutputFormat::csv;
    } else {
        fail("format", "expected json or csv");
    }
    if (config.contains("seed")) {
        std::uint64_t seed = 0;
        read(config, "", "seed", seed);
        s.seed = seed;
    }
    read(config, "", "scale_factor", s.scale_factor);
    read(config, "", "target_security", s.target_security);
    read(config, "", "model_search", s.model_search);
    if (config.contains("N_sig")) {
        double n = 0.0;
        read(config, "", "N_sig", n);
        s.n_sig = n;
    }
    if (config.contains("source")) {
        parse_source(config.at("source"), "source", s.alice_source);
        s.peer_source = s.alice_source;
    }
    if (config.contains("alice_source")) parse_source(config.at("alice_source"), "alice_source", s.alice_source);
    if (config.contains("peer_source")) parse_source(config.at("peer_source"), "peer_source", s.peer_source);
    if (config.contains("profile")) parse_profile(config.at("profile"), "profile", s.profile);
    if (config.contains("budget")) parse_budget(config.at("budget"), "budget", s.options.budget);
    if (config.contains("pipeline")) {
        const json& p = config.at("pipeline");
        check_keys(p, "pipeline", {"r_fraction", "zeta"});
        read(p, "pipeline", "r_fraction", s.options.r_fraction);
        read(p, "pipeline", "zeta", s.options.zeta);
    }
    if (config.contains("replay")) s.replay = parse_replay(config.at("replay"), "replay");
    if (config.contains("protocol")) parse_protocol(config.at("protocol"), "protocol", s.protocol);
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open scenario file");
    json config;
    try {
        config = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError(path + ": invalid JSON: " + e.what());
    }
    return parse_scenario(config);
}

std::vector<TableRow> table_arithmetic(double pulse_rate) {
    std::vector<TableRow> rows;
    for (SecurityLevel level : {SecurityLevel::order_1e5, SecurityLevel::order_1e10}) {
        for (const auto& p : detector_presets()) {
            TableRow row;
            row.detector = p.name;
            row.level = level;
            row.printed = p.table[static_cast<int>(level)];
            row.minutes = row.printed.n_sig / (60.0 * pulse_rate);
            const double step = std::pow(10.0, -row.printed.decimals);
            // printed values are truncated, so allow for representation error at the lower edge
            row.matches = row.minutes >= row.printed.minutes - 1e-9 && row.minutes < row.printed.minutes + step;
            rows.push_back(row);
        }
    }
    return rows;
}

namespace {

std::string level_name(SecurityLevel level) { return level == SecurityLevel::order_1e5 ? "1e-5" : "1e-10"; }

json sessions_json(const std::array<KgpSummary, 2>& sessions) {
    json out = json::array();
    for (const auto& s : sessions) {
        json j;
        j["usable"] = s.usable;
        j["reason"] = s.reason;
        j["selected_bell_state"] = std::string(to_string(s.selected));
        j["z_signal_size"] = number(s.z_signal_size);
        j["r_k"] = number(s.r_k);
        j["n_k"] = number(s.n_k);
        j["e_obs"] = number(s.e_obs);
        j["e_bar"] = number(s.e_bar);
        j["p_E"] = number(s.p_E);
        j["yields"] = json::object();
        for (BellState k : kBellStates) j["yields"][std::string(to_string(k))] = to_json(s.yields[index(k)]);
        out.push_back(j);
    }
    return out;
}

bool passes(const SecurityReport& r, double target) { return r.feasible && r.max_failure() <= target; }

RunOutput run_analytic(const Scenario& s) {
    RunOutput out;
    out.json["mode"] = "analytic";
    out.json["preset"] = s.preset;
    out.json["target_security"] = s.target_security;
    SecurityReport report;
    if (s.replay) {
        const ReplayInputs& r = *s.replay;
        report = replay_report(r, s.options);
        out.json["replay"] = {{"e_obs", r.e_obs}, {"n_k", r.n_k}, {"r_k", r.r_k},        {"c_k0", r.c_k0},
                              {"c_k1", r.c_k1},   {"e_k1", r.e_k1}, {"N_sig", r.N_sig}, {"pulse_rate", r.pulse_rate}};
    } else {
        const AnalyticModel model(s.setup(), s.setup());
        PipelineResult result;
        if (s.n_sig) {
            result = model.evaluate(*s.n_sig, s.options);
        } else {
            try {
                result = signature_length_search(model, s.options, s.target_security).result;
            } catch (const InfeasibleError& e) {
                result = model.evaluate(1e17, s.options);
                result.report.note = e.what();
                result.report.feasible = false;
            }
            out.json["searched"] = true;
        }
        report = result.report;
        out.json["sessions"] = sessions_json(result.sessions);
    }
    out.json["report"] = to_json(report);
    out.json["passes_target"] = passes(report, s.target_security);
    out.exit_code = passes(report, s.target_security) ? kExitOk : kExitInfeasible;
    if (!report.feasible) out.json["diagnostic"] = report.note.empty() ? "E_bar is not below p_E" : report.note;

    std::ostringstream csv;
    write_csv_header(csv);
    const DetectorPreset& preset = find_preset(s.preset);
    write_csv_row(csv, preset.name, s.profile.detector_efficiency, s.profile.dark_count_prob, report);
    out.csv = csv.str();
    return out;
}

RunOutput run_montecarlo_mode(const Scenario& s) {
    RunOutput out;
    const double full = s.n_sig.value_or(find_preset(s.preset).table[0].n_sig);
    const auto pulses = static_cast<std::uint64_t>(std::floor(full / s.scale_factor));
    if (pulses == 0) fail("scale_factor", "leaves no pulses");
    const KgpSetup setup = s.setup();
    const MonteCarloResult mc = run_montecarlo(setup, setup, s.options, pulses, *s.seed);
    const ExpectedRates rates = expected_rates(setup.alice, setup.peer, setup.profile);

    out.json["mode"] = "montecarlo";
    out.json["preset"] = s.preset;
    out.json["seed"] = *s.seed;
    out.json["scale_factor"] = s.scale_factor;
    out.json["pulses"] = pulses;
    out.json["sessions"] = sessions_json(mc.result.sessions);
    out.json["report"] = to_json(mc.result.report);

    bool all_ok = true;
    json checks = json::array();
    std::ostringstream csv;
    csv << "session,bell_state,check,value,reference,pass\n";
    const auto add = [&](int session, BellState k, const std::string& name, double value, double reference, bool ok) {
        checks.push_back({{"session", session},
                          {"bell_state", std::string(to_string(k))},
                          {"check", name},
                          {"value", number(value)},
                          {"reference", number(reference)},
                          {"pass", ok}});
        csv << session << ',' << to_string(k) << ',' << name << ',' << value << ',' << reference << ','
            << (ok ? "true" : "false") << '\n';
        all_ok = all_ok && ok;
    };
    const double n = static_cast<double>(pulses);
    for (int session = 0; session < 2; ++session) {
        const MonteCarloKgp& kgp = mc.kgps[session];
        for (BellState k : kBellStates) {
            const int i = index(k);
            const double expected = rates.expected_size(Basis::Z, k, Intensity::signal, Intensity::signal, n);
            const double observed = static_cast<double>(kgp.data.size(Basis::Z, k, Intensity::signal, Intensity::signal));
            add(session, k, "z_signal_size_within_5_sigma", observed, expected,
                std::abs(observed - expected) <= 5.0 * std::sqrt(std::max(expected, 1.0)));
            const YieldEstimate& y = kgp.summary.yields[i];
            if (!y.usable) continue;
            add(session, k, "n_k0_below_truth", y.n_k0, static_cast<double>(kgp.truth[i].keep_vacuum),
                y.n_k0 <= static_cast<double>(kgp.truth[i].keep_vacuum));
            add(session, k, "n_k1_below_truth", y.n_k1, static_cast<double>(kgp.truth[i].keep_single),
                y.n_k1 <= static_cast<double>(kgp.truth[i].keep_single));
            add(session, k, "e_k1_above_truth", y.e_k1, kgp.truth[i].phase_error, y.e_k1 >= kgp.truth[i].phase_error);
        }
    }
    out.json["checks"] = checks;
    out.json["checks_pass"] = all_ok;
    if (!mc.result.report.feasible) {
        out.json["diagnostic"] = "signature infeasible at " + std::to_string(pulses) + " pulses: " +
                                 (mc.result.report.note.empty() ? "E_bar is not below p_E" : mc.result.report.note);
    }
    out.csv = csv.str();
    const bool security_ok = mc.result.report.feasible || s.scale_factor > 1.0;
    out.exit_code = !all_ok ? kExitInfeasible : security_ok ? kExitOk : kExitInfeasible;
    return out;
}

RunOutput run_protocol(const Scenario& s) {
    RunOutput out;
    const ProtocolSettings& p = s.protocol;
    const std::uint64_t seed = *s.seed;
    out.json["mode"] = "protocol";
    out.json["seed"] = seed;
    out.json["L"] = p.L;
    out.json["R"] = p.R;
    out.json["trials"] = p.trials;

    const double half = static_cast<double>(p.L) / 2.0;
    const double e_bar = p.error_rate + mu_parameter(half, static_cast<double>(p.R), p.eps_PE);
    Thresholds th;
    try {
        th = choose_thresholds(e_bar, p.p_E);
    } catch (const InfeasibleError& e) {
        out.json["diagnostic"] = e.what();
        out.exit_code = kExitInfeasible;
        return out;
    }
    out.json["nominal"] = {{"E_bar", e_bar}, {"p_E", p.p_E}, {"s_a", th.s_a}, {"s_v", th.s_v}};

    const HonestRunParams params{p.L, p.R, p.error_rate, p.eps_PE, p.p_E};
    out.json["example_run"] = to_json(simulate_honest_run(params, derive_seed(seed, 0)));

    const double L = static_cast<double>(p.L);
    struct Experiment {
        std::string name;
        RateEstimate estimate;
        double bound;
    };
    std::vector<Experiment> experiments;
    try {
        experiments.push_back({"honest_abort", simulate_honest_runs(params, p.trials, derive_seed(seed, 1)).abort,
                               2.0 * p.eps_PE});
    } catch (const InfeasibleError& e) {
        out.json["diagnostic"] = e.what();
        out.exit_code = kExitInfeasible;
        return out;
    }
    const double e_plant = (th.s_a + th.s_v) / 2.0;
    experiments.push_back({"repudiation",
                           simulate_repudiating_alice(e_plant, e_plant, p.L, th.s_a, th.s_v, p.trials,
                                                      derive_seed(seed, 2)),
                           repudiation_bound(th.s_a, th.s_v, L)});
    experiments.push_back({"forge_random_guess",
                           simulate_forging_bob(ForgeStrategy::random_guess, p.L, th.s_v, p.trials,
                                                derive_seed(seed, 3)),
                           forging_guess_bound(p.L, th.s_v)});

    bool all_ok = true;
    std::ostringstream csv;
    csv << "experiment,successes,trials,rate,bound,limit,pass\n";
    json rows = json::array();
    for (const auto& e : experiments) {
        const double limit = e.bound + 3.0 * e.estimate.standard_error(e.bound);
        const bool ok = e.estimate.rate() <= limit;
        all_ok = all_ok && ok;
        json j = to_json(e.estimate);
        j["experiment"] = e.name;
        j["bound"] = number(e.bound);
        j["limit"] = number(limit);
        j["pass"] = ok;
        rows.push_back(j);
        csv << e.name << ',' << e.estimate.successes << ',' << e.estimate.trials << ',' << e.estimate.rate() << ','
            << e.bound << ',' << limit << ',' << (ok ? "true" : "false") << '\n';
    }
    out.json["experiments"] = rows;
    out.json["checks_pass"] = all_ok;
    out.csv = csv.str();
    out.exit_code = all_ok ? kExitOk : kExitInfeasible;
    return out;
}

RunOutput run_table_sweep(const Scenario& s) {
    RunOutput out;
    const double rate = s.peer_source.pulse_rate;
    const std::vector<TableRow> rows = table_arithmetic(rate);
    std::map<std::string, std::unique_ptr<AnalyticModel>> models;
    bool all_ok = true;
    json table = json::array();
    std::ostringstream csv;
    csv << "security_level,detector,eta_D,Y_0,N_sig,t_r_minutes,printed_t_r_minutes,matches,model_N_sig,"
           "model_t_r_minutes\n";
    for (const TableRow& row : rows) {
        const DetectorPreset& preset = find_preset(row.detector);
        json j{{"security_level", level_name(row.level)},
               {"detector", row.detector},
               {"citation", preset.citation},
               {"eta_D", preset.eta_d},
               {"Y_0", preset.y0},
               {"N_sig", row.printed.n_sig},
               {"t_r_minutes", row.minutes},
               {"printed_t_r_minutes", row.printed.minutes},
               {"matches", row.matches}};
        all_ok = all_ok && row.matches;
        double model_n = std::nan("");
        if (s.model_search) {
            auto& model = models[row.detector];
            if (!model) {
                KgpSetup setup = s.setup();
                setup.profile.detector_efficiency = preset.eta_d;
                setup.profile.dark_count_prob = preset.y0;
                model = std::make_unique<AnalyticModel>(setup, setup);
            }
            PipelineOptions options = s.options;
            options.budget = table_budget(row.level);
            try {
                const SearchResult found = signature_length_search(*model, options, table_target(row.level));
                model_n = found.N_sig;
                j["model"] = {{"N_sig", found.N_sig},
                              {"t_r_minutes", found.t_r_seconds / 60.0},
                              {"n_k", found.n_k},
                              {"max_failure", found.result.report.max_failure()}};
            } catch (const InfeasibleError& e) {
                j["model"] = {{"diagnostic", e.what()}};
            }
        }
        table.push_back(j);
        csv << level_name(row.level) << ',' << row.detector << ',' << preset.eta_d << ',' << preset.y0 << ','
            << row.printed.n_sig << ',' << row.minutes << ',' << row.printed.minutes << ','
            << (row.matches ? "true" : "false") << ',' << model_n << ',' << model_n / (60.0 * rate) << '\n';
    }
    out.json["mode"] = "table-sweep";
    out.json["pulse_rate"] = rate;
    out.json["rows"] = table;
    out.json["arithmetic_matches"] = all_ok;
    out.csv = csv.str();
    out.exit_code = all_ok ? kExitOk : kExitInfeasible;
    return out;
}

}  // namespace

RunOutput run(const Scenario& scenario) {
    scenario.validate();
    switch (scenario.mode) {
        case Mode::analytic: return run_analytic(scenario);
        case Mode::montecarlo: return run_montecarlo_mode(scenario);
        case Mode::protocol: return run_protocol(scenario);
        case Mode::table_sweep: return run_table_sweep(scenario);
    }
    throw ScenarioError("mode: unsupported");
}

void write_output(std::ostream& out, const RunOutput& output, OutputFormat format) {
    if (format == OutputFormat::csv) {
        out << output.csv;
    } else {
        out << output.json.dump(2) << '\n';
    }
}

}  // namespace mdiqds

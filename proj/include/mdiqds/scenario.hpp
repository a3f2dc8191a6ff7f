#pragma once

// Scenario files, detector presets and the orchestration behind the CLI.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mdiqds/pipeline.hpp"

namespace mdiqds {

/// Schema or range problem in a scenario; the message starts with the field path.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode { analytic, montecarlo, protocol, table_sweep };
enum class OutputFormat { json, csv };

std::string_view to_string(Mode mode);
std::string_view to_string(OutputFormat format);

inline constexpr int kExitOk = 0;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitValidation = 3;

/// Detector row of the raw-key-time tables.
struct TableEntry {
    double n_sig = 0.0;
    /// t_r in minutes as printed; `decimals` digits after the point.
    double minutes = 0.0;
    int decimals = 0;
};

struct DetectorPreset {
    std::string name;
    double eta_d = 0.0;
    double y0 = 0.0;
    std::string citation;
    /// [0]: 1e-5 security level, [1]: 1e-10 security level.
    std::array<TableEntry, 2> table{};
};

const std::vector<DetectorPreset>& detector_presets();
/// Throws ScenarioError listing the known names.
const DetectorPreset& find_preset(std::string_view name);

/// The two security levels of the raw-key-time tables.
enum class SecurityLevel { order_1e5 = 0, order_1e10 = 1 };

/// Budget and acceptance target used for a table's security level.
ErrorBudget table_budget(SecurityLevel level);
double table_target(SecurityLevel level);

/// Honest-run, repudiation and forging experiments of protocol mode.
struct ProtocolSettings {
    std::size_t L = 1000;
    std::size_t R = 200;
    double error_rate = 0.02;
    double eps_PE = 1e-2;
    double p_E = 0.5;
    std::uint64_t trials = 10000;
};

struct Scenario {
    Mode mode = Mode::analytic;
    std::string preset = "standard";
    DecoySourceConfig alice_source;
    DecoySourceConfig peer_source;
    SystemProfile profile;
    PipelineOptions options;
    double target_security = 1e-4;
    std::optional<std::uint64_t> seed;
    OutputFormat format = OutputFormat::json;
    double scale_factor = 1.0;
    /// Pulses per KGP. Analytic mode searches for the smallest passing
    /// value when absent; Monte-Carlo mode falls back to the preset's table value.
    std::optional<double> n_sig;
    /// Analytic mode evaluates these published inputs instead of the model.
    std::optional<ReplayInputs> replay;
    ProtocolSettings protocol;
    /// Table sweep also searches N_sig with the analytic model.
    bool model_search = true;

    [[nodiscard]] KgpSetup setup() const { return {alice_source, peer_source, profile}; }

    /// Throws ScenarioError.
    void validate() const;
};

/// Defaults, then the preset, then explicit fields. Unknown keys are errors.
Scenario parse_scenario(const nlohmann::json& config);
Scenario load_scenario(const std::string& path);

/// Arithmetic replay of one table row: t_r = N_sig / (60 rate) minutes.
struct TableRow {
    std::string detector;
    SecurityLevel level = SecurityLevel::order_1e5;
    TableEntry printed;
    double minutes = 0.0;
    /// printed <= minutes < printed + 10^-decimals.
    bool matches = false;
};

std::vector<TableRow> table_arithmetic(double pulse_rate = 1e9);

struct RunOutput {
    int exit_code = kExitOk;
    nlohmann::json json;
    std::string csv;
};

RunOutput run(const Scenario& scenario);

void write_output(std::ostream& out, const RunOutput& output, OutputFormat format);

}  // namespace mdiqds

#pragma once

#include "pricegrid/equilibrium.hpp"
#include "pricegrid/passivity.hpp"
#include "pricegrid/scenario.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pricegrid {

enum class RunOutcome { converged, steady_offset, diverged };

std::string_view to_string(RunOutcome outcome);
/// 0 converged, 10 steady offset, 11 diverged.
int exit_code(RunOutcome outcome);

inline constexpr double kTailWindow = 5.0;          // [s]
inline constexpr double kConvergedHz = 1e-3;        // final |omega| below this counts as restored
inline constexpr double kSettlingBandPu = 1e-3;     // settling band after an event

struct SettlingTime {
    double event_time = 0.0;
    std::string event;
    double settling = 0.0;  // seconds after the event; NaN when not settled before the next event
};

/// Tail statistics of one run. Every number derives from the trajectory CSV
/// rows with t >= end_time - kTailWindow.
struct SummaryReport {
    std::string name;
    RunOutcome status = RunOutcome::converged;
    std::string message;
    double end_time = 0.0;
    double horizon = 0.0;

    Vec final_omega_pu;  // tail mean per node
    double final_max_omega_pu = 0.0;
    double final_max_omega_hz = 0.0;
    std::vector<SettlingTime> settling;
    double sharing_defect = 0.0;    // max - min of tail mean p_g / w
    double price_spread = 0.0;      // max - min of tail mean lambda
    double balance_residual = 0.0;  // tail mean of surplus - losses
    Vec weights;
};

SummaryReport summarize(const std::string& name, const Trajectory& trajectory, const Vec& weights,
                        double horizon);

/// Model, pre-fault steady state and integrator setup of a scenario. The
/// excitation is calibrated on the pre-fault steady state unless given.
struct PreparedRun {
    ClosedLoopModel model;
    EquilibriumProblem problem;
    EquilibriumSolution initial;
    SimulationSetup setup;
};

ClosedLoopModel build_model(const Scenario& scenario);
PreparedRun prepare(const Scenario& scenario);

struct RunResult {
    Scenario scenario;
    PreparedRun prepared;
    Trajectory trajectory;
    std::optional<EquilibriumSolution> post_fault;  // empty when no steady state exists
    std::string post_fault_error;
    std::vector<DissipationSample> dissipation;
    SummaryReport summary;
};

/// Simulates the scenario and, when `out_dir` is set, writes scenario.json,
/// trajectory.csv, passivity.csv, summary.json, equilibrium.csv and
/// post_fault_equilibrium.csv there.
RunResult run(const Scenario& scenario, const std::optional<std::filesystem::path>& out_dir = {});

void write_trajectory_csv(std::ostream& out, const RunResult& result);
void write_passivity_csv(std::ostream& out, const std::vector<DissipationSample>& trace);
void write_summary_json(std::ostream& out, const SummaryReport& summary);

enum class SweepParameter { eta, topology };
SweepParameter parse_sweep_parameter(std::string_view name);
std::string_view to_string(SweepParameter parameter);

/// Copy of `base` with one sweep value applied.
Scenario with_parameter(const Scenario& base, SweepParameter parameter, const std::string& value);

struct SweepRow {
    std::string value;
    std::optional<SummaryReport> summary;
    std::string error;
};

/// One run per value on up to `workers` threads; rows keep the order of
/// `values`. A failing run records its error and the sweep continues.
std::vector<SweepRow> sweep(const Scenario& base, SweepParameter parameter,
                            const std::vector<std::string>& values,
                            const std::optional<std::filesystem::path>& out_dir = {}, int workers = 0);

void write_sweep_csv(std::ostream& out, SweepParameter parameter, const std::vector<SweepRow>& rows);

struct SuiteEntry {
    std::string experiment;
    std::string variant;
    Scenario scenario;
};

/// Topologies a-d, lossless controller at eta 0.25/0.5/1, eta sweep
/// 0.5/1/2/3, -1 Hz clock drift at node 1 and loss of communication edge
/// (1,2), all derived from builtin_paper_case().
std::vector<SuiteEntry> paper_suite_entries();

/// Runs every suite entry into out_dir/<experiment>_<variant>/ and writes
/// out_dir/suite.csv.
std::vector<SweepRow> paper_suite(const std::filesystem::path& out_dir, int workers = 0);

}  // namespace pricegrid

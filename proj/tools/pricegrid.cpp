// Command line front end: simulate, sweep, equilibrium, paper-suite.

#include "pricegrid/harness.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace pricegrid;

namespace {

Scenario scenario_or_builtin(const std::string& path)
{
    return path.empty() ? builtin_paper_case() : load_scenario(path);
}

void print_summary(const SummaryReport& s)
{
    std::printf("%s: %s, final max |omega| = %.3e Hz (%.3e p.u.), sharing defect %.3e, price spread %.3e\n",
                s.name.c_str(), std::string(to_string(s.status)).c_str(), s.final_max_omega_hz,
                s.final_max_omega_pu, s.sharing_defect, s.price_spread);
    for (const auto& st : s.settling) {
        if (std::isnan(st.settling)) {
            std::printf("  %s at t = %g s: not settled\n", st.event.c_str(), st.event_time);
        } else {
            std::printf("  %s at t = %g s: settled after %.2f s\n", st.event.c_str(), st.event_time, st.settling);
        }
    }
    if (!s.message.empty()) std::printf("  %s\n", s.message.c_str());
}

void print_rows(const std::vector<SweepRow>& rows)
{
    for (const auto& r : rows) {
        if (r.summary) {
            std::printf("%-24s %-14s %12.3e Hz  sharing %10.3e\n", r.value.c_str(),
                        std::string(to_string(r.summary->status)).c_str(), r.summary->final_max_omega_hz,
                        r.summary->sharing_defect);
        } else {
            std::printf("%-24s error: %s\n", r.value.c_str(), r.error.c_str());
        }
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Price-based frequency control of lossy AC grids"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    double horizon = 0.0;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run one scenario");
    simulate_cmd->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
    simulate_cmd->add_option("--out", out_dir, "Output directory")->required();
    simulate_cmd->add_option("--horizon", horizon, "Override the scenario horizon [s]")
        ->check(CLI::PositiveNumber);

    std::string param;
    std::vector<std::string> values;
    int workers = 0;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run one scenario per parameter value");
    sweep_cmd->add_option("--param", param, "eta or topology")->required();
    sweep_cmd->add_option("--values", values, "Comma separated values")->delimiter(',')->required();
    sweep_cmd->add_option("--scenario", scenario_path, "Base scenario (default: built-in paper case)")
        ->check(CLI::ExistingFile);
    sweep_cmd->add_option("--out", out_dir, "Output directory");
    sweep_cmd->add_option("--workers", workers, "Parallel runs (0 = all cores)");

    bool post_fault = false;
    auto* eq_cmd = app.add_subcommand("equilibrium", "Print the steady state of a scenario");
    eq_cmd->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
    eq_cmd->add_flag("--post-fault", post_fault, "Steady state after all events");

    auto* suite_cmd = app.add_subcommand("paper-suite", "Run the full experiment suite");
    suite_cmd->add_option("--out", out_dir, "Output directory")->required();
    suite_cmd->add_option("--workers", workers, "Parallel runs (0 = all cores)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate_cmd) {
            Scenario s = load_scenario(scenario_path);
            if (horizon > 0.0) s.horizon = horizon;
            const RunResult r = run(s, fs::path(out_dir));
            print_summary(r.summary);
            return exit_code(r.summary.status);
        }
        if (*sweep_cmd) {
            const auto p = parse_sweep_parameter(param);
            std::optional<fs::path> dir;
            if (!out_dir.empty()) dir = out_dir;
            const auto rows = sweep(scenario_or_builtin(scenario_path), p, values, dir, workers);
            write_sweep_csv(std::cout, p, rows);
            return 0;
        }
        if (*eq_cmd) {
            const Scenario s = load_scenario(scenario_path);
            const PreparedRun prep = prepare(s);
            if (!post_fault) {
                write_equilibrium_report(std::cout, prep.initial, prep.problem);
            } else {
                const auto problem = EquilibriumProblem::from_model(apply_events(prep.model, s.events));
                write_equilibrium_report(std::cout, solve_equilibrium(problem), problem);
            }
            return 0;
        }
        if (*suite_cmd) {
            const auto rows = paper_suite(out_dir, workers);
            print_rows(rows);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

#include "doctest.h"
#include "fixtures.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

using namespace pgtest;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({
  "name": "minimal",
  "network": "paper",
  "eta": 0.5,
  "communication": "ring",
  "cost": {"weights": [1, 1, 1, 1, 1]},
  "p_load": {"6": 0.2},
  "events": [{"type": "step_load", "time": 1.0, "node": 7, "delta": 0.05}],
  "horizon": 3.0
})";

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("pricegrid_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string replaced(std::string text, const std::string& from, const std::string& to)
{
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    return text.replace(at, from.size(), to);
}

}  // namespace

TEST_CASE("built-in paper case")
{
    const Scenario s = builtin_paper_case();
    CHECK(s.grid.lines.size() == 8);
    CHECK(s.grid.nodes.size() == 7);
    CHECK(s.eta == 1.0);
    CHECK(s.events.size() == 2);
    CHECK(s.horizon == 90.0);
    CHECK(std::get<CommTopology>(s.comm) == CommTopology::physical);
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("scenario parsing")
{
    const Scenario s = parse_scenario(kMinimal);
    CHECK(s.name == "minimal");
    CHECK(s.eta == 0.5);
    CHECK(std::get<CommTopology>(s.comm) == CommTopology::ring);
    CHECK(s.p_load.at(6) == 0.2);
    REQUIRE(s.events.size() == 1);
    CHECK(std::get<StepLoad>(s.events[0]).node == 7);
    CHECK(s.mode == ControllerMode::lossy);

    const Scenario back = parse_scenario(scenario_to_json(s));
    CHECK(scenario_to_json(back) == scenario_to_json(s));
    CHECK(scenario_to_json(parse_scenario(scenario_to_json(builtin_paper_case()))) ==
          scenario_to_json(builtin_paper_case()));
}

TEST_CASE("scenario parsing is strict")
{
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"horizon\"", "\"horizn\"")), ParseError);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"ring\"", "\"star\"")), std::exception);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"step_load\"", "\"step_lod\"")), ParseError);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"delta\": 0.05", "\"delta\": 0.05, \"x\": 1")),
                    ParseError);
    CHECK_THROWS_AS(parse_scenario("{\"name\": "), ParseError);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"time\": 1.0", "\"time\": 7.0")), ParseError);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "\"node\": 7", "\"node\": 70")), ParseError);
    CHECK_THROWS_AS(parse_scenario(replaced(kMinimal, "[1, 1, 1, 1, 1]", "[1, 1]")), ParseError);
}

TEST_CASE("network parsing")
{
    const GridSpec g = parse_network(slurp(fs::path(PRICEGRID_SCENARIO_DIR) / "paper_network.json"));
    const GridSpec ref = paper_grid();
    REQUIRE(g.nodes.size() == ref.nodes.size());
    REQUIRE(g.lines.size() == ref.lines.size());
    for (std::size_t i = 0; i < g.lines.size(); ++i) CHECK(g.lines[i].susceptance == ref.lines[i].susceptance);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        CHECK(g.nodes[i].inertia == ref.nodes[i].inertia);
        CHECK(g.nodes[i].shunt_susceptance == ref.nodes[i].shunt_susceptance);
    }
    CHECK_THROWS_AS(parse_network(R"({"nodes": [{"id": 1, "kind": "load", "M": 2}], "lines": []})"), ParseError);
}

TEST_CASE("shipped scenarios load")
{
    for (const auto& entry : fs::directory_iterator(PRICEGRID_SCENARIO_DIR)) {
        const auto name = entry.path().filename().string();
        if (name == "paper_network.json") continue;
        CAPTURE(name);
        CHECK_NOTHROW(load_scenario(entry.path()).validate());
    }
}

TEST_CASE("paper case run writes its outputs")
{
    const fs::path dir = scratch_dir("run");
    const RunResult r = run(builtin_paper_case(), dir);
    CHECK(r.summary.status == RunOutcome::converged);
    CHECK(exit_code(r.summary.status) == 0);
    CHECK(r.summary.final_max_omega_hz < kConvergedHz);
    CHECK(r.summary.sharing_defect < 1e-4);
    REQUIRE(r.summary.settling.size() == 2);
    CHECK(r.post_fault);
    for (const char* f : {"scenario.json", "trajectory.csv", "passivity.csv", "summary.json", "equilibrium.csv",
                          "post_fault_equilibrium.csv"}) {
        CHECK(fs::exists(dir / f));
    }

    std::istringstream csv(slurp(dir / "trajectory.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("t,omega_1,", 0) == 0);
    CHECK(header.find("p_g_5,lambda_1") != std::string::npos);
    CHECK(header.find("nu_1_2") != std::string::npos);
    CHECK(header.find("U_7,H,Hbar,gap") != std::string::npos);

    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(j.at("status") == "converged");

    const Scenario again = load_scenario(dir / "scenario.json");
    CHECK(scenario_to_json(again) == scenario_to_json(builtin_paper_case()));
}

TEST_CASE("identical scenarios give identical files")
{
    Scenario s = parse_scenario(kMinimal);
    const fs::path a = scratch_dir("det_a");
    const fs::path b = scratch_dir("det_b");
    run(s, a);
    run(s, b);
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
    CHECK(slurp(a / "passivity.csv") == slurp(b / "passivity.csv"));
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
}

TEST_CASE("sweeps")
{
    const Scenario base = parse_scenario(kMinimal);
    CHECK(sweep(base, SweepParameter::eta, {}).empty());

    const auto rows = sweep(base, SweepParameter::topology, {"a", "b", "c", "d", "bogus"}, {}, 2);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].value == "a");
    CHECK(rows[3].value == "d");
    for (int i = 0; i < 4; ++i) CHECK(rows[static_cast<std::size_t>(i)].summary);
    CHECK_FALSE(rows[4].summary);
    CHECK_FALSE(rows[4].error.empty());

    const Scenario eta2 = with_parameter(base, SweepParameter::eta, "2");
    CHECK(eta2.eta == 2.0);
    CHECK(parse_sweep_parameter("eta") == SweepParameter::eta);

    std::ostringstream out;
    write_sweep_csv(out, SweepParameter::topology, rows);
    CHECK(out.str().rfind("topology,", 0) == 0);
}

TEST_CASE("suite covers every experiment")
{
    const auto entries = paper_suite_entries();
    int topology = 0, lossless = 0, rx = 0, drift = 0, failure = 0;
    for (const auto& e : entries) {
        topology += e.experiment == "topology";
        lossless += e.experiment == "lossless";
        rx += e.experiment == "rx_ratio";
        drift += e.experiment == "clock_drift";
        failure += e.experiment == "comm_failure";
        CHECK_NOTHROW(e.scenario.validate());
    }
    CHECK(topology == 4);
    CHECK(lossless == 3);
    CHECK(rx == 4);
    CHECK(drift == 1);
    CHECK(failure == 1);
}

TEST_CASE("summary of an empty trajectory is diverged")
{
    const SummaryReport s = summarize("empty", Trajectory{}, Vec::Ones(5), 10.0);
    CHECK(s.status == RunOutcome::diverged);
    CHECK(exit_code(s.status) == 11);
    CHECK(exit_code(RunOutcome::steady_offset) == 10);
}

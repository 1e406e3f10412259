#pragma once

#include "pricegrid/controller.hpp"
#include "pricegrid/dae.hpp"
#include "pricegrid/network.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pricegrid {

/// Gain entries: one value broadcast to every entry, or one value per entry.
struct GainSetting {
    std::vector<double> tau_gen{1.0};
    std::vector<double> tau_price{1.0};
    std::vector<double> tau_flow{1.0};

    ControllerGains resolve(int num_generators, int num_nodes, int num_edges) const;
};

/// Communication graph as a named topology or an explicit edge list of
/// external node ids.
using CommSetting = std::variant<CommTopology, std::vector<std::pair<int, int>>>;

struct Scenario {
    std::string name = "scenario";
    GridSpec grid;
    double eta = 0.0;
    CommSetting comm = CommTopology::physical;
    std::vector<double> weights;
    GainSetting gains;
    ControllerMode mode = ControllerMode::lossy;

    std::map<int, double> p_load;  // external id -> demand, absent means 0
    std::map<int, double> q_load;  // load ids only
    std::optional<std::vector<double>> excitation;
    double target_voltage = 1.0;

    std::vector<Event> events;
    double horizon = 90.0;
    IntegratorConfig integrator;

    /// Checks ids, event times and value ranges; throws ModelError.
    void validate() const;
};

/// Parses a network description:
///   {"eta": 1.0,
///    "nodes": [{"id": 1, "kind": "generator", "A": 1.6, "B_shunt": -5.5,
///               "M": 5.2, "Xd": 0.02, "Xd_prime": 0.004, "tau_U": 6.45}, ...],
///    "lines": [{"from": 1, "to": 2, "B": 1.27}, ...]}
/// Unknown keys are rejected with ParseError.
GridSpec parse_network(const std::string& text);

/// Parses a scenario file; a string "network" entry is a path relative to
/// `base_dir`, or "paper" for the built-in grid.
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Canonical JSON form accepted back by parse_scenario.
std::string scenario_to_json(const Scenario& scenario);

/// The seven-node grid: generators 1-5, loads 6-7, eight lines.
GridSpec paper_grid();

/// Paper grid at eta = 1, physical communication, weights (1, 1.1, ..., 1.4),
/// gains 0.1, 0.3 p.u. demand at nodes 6 and 7, +0.1 p.u. steps at node 6
/// (30 s) and node 7 (60 s), 90 s horizon.
Scenario builtin_paper_case();

}  // namespace pricegrid

#include "pricegrid/scenario.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pricegrid {

using nlohmann::json;
using nlohmann::ordered_json;

ControllerGains GainSetting::resolve(int num_generators, int num_nodes, int num_edges) const
{
    auto expand = [](const std::vector<double>& v, int size, const char* what) {
        if (v.size() == 1) return Vec::Constant(size, v.front()).eval();
        if (static_cast<int>(v.size()) != size) {
            throw ModelError(std::string(what) + " needs 1 or " + std::to_string(size) + " entries");
        }
        return Eigen::Map<const Vec>(v.data(), size).eval();
    };
    ControllerGains g;
    g.tau_gen = expand(tau_gen, num_generators, "tau_g");
    g.tau_price = expand(tau_price, num_nodes, "tau_lambda");
    g.tau_flow = expand(tau_flow, num_edges, "tau_nu");
    g.validate(num_generators, num_nodes, num_edges);
    return g;
}

void Scenario::validate() const
{
    std::set<int> ids;
    std::set<int> loads;
    int num_gen = 0;
    for (const auto& node : grid.nodes) {
        ids.insert(node.id);
        if (node.kind == NodeKind::load) {
            loads.insert(node.id);
        } else {
            ++num_gen;
        }
    }
    detail::require(eta >= 0.0, "eta must be nonnegative");
    detail::require(horizon > 0.0, "horizon must be positive");
    detail::require(static_cast<int>(weights.size()) == num_gen, "cost needs one weight per generator");
    for (const auto& entry : p_load) {
        detail::require(ids.count(entry.first) == 1,
                        "active demand at unknown node " + std::to_string(entry.first));
    }
    for (const auto& entry : q_load) {
        detail::require(loads.count(entry.first) == 1,
                        "reactive demand must sit at a load node, got " + std::to_string(entry.first));
    }
    if (excitation) {
        detail::require(static_cast<int>(excitation->size()) == num_gen,
                        "excitation needs one value per generator");
    }
    detail::require(target_voltage > 0.0, "target voltage must be positive");
    integrator.validate();
    for (const auto& ev : events) {
        const double t = event_time(ev);
        if (std::holds_alternative<ClockDrift>(ev)) {
            detail::require(t >= 0.0 && t < horizon, "clock drift must start in [0, horizon)");
            detail::require(ids.count(std::get<ClockDrift>(ev).node) == 1, "clock drift at unknown node");
        } else {
            detail::require(t > 0.0 && t < horizon, "event time must lie strictly inside (0, horizon)");
        }
        if (const auto* s = std::get_if<StepLoad>(&ev)) {
            detail::require(ids.count(s->node) == 1, "step load at unknown node");
        }
        if (const auto* c = std::get_if<CommEdgeFailure>(&ev)) {
            detail::require(ids.count(c->from) == 1 && ids.count(c->to) == 1,
                            "communication failure on unknown nodes");
        }
    }
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!obj.is_object()) {
        throw ParseError(where + ": expected an object");
    }
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) {
            throw ParseError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where)
{
    if (!obj.contains(key)) {
        throw ParseError(where + ": missing key '" + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where)
{
    return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

json parse_json(const std::string& text, const std::string& where)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(where + ": " + e.what());
    }
}

GridSpec grid_from_json(const json& j)
{
    check_keys(j, {"eta", "nodes", "lines"}, "network");
    GridSpec g;
    g.rx_ratio = get_or<double>(j, "eta", 0.0, "network");
    const json nodes = get<json>(j, "nodes", "network");
    if (!nodes.is_array()) throw ParseError("network: 'nodes' must be an array");
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const json& nj = nodes[k];
        const std::string where = "network.nodes[" + std::to_string(k) + "]";
        const auto kind = get<std::string>(nj, "kind", where);
        NodeSpec n;
        n.id = get<int>(nj, "id", where);
        n.damping = get<double>(nj, "A", where);
        n.shunt_susceptance = get_or<double>(nj, "B_shunt", 0.0, where);
        n.shunt_conductance = get_or<double>(nj, "G_shunt", 0.0, where);
        if (kind == "generator") {
            check_keys(nj, {"id", "kind", "A", "B_shunt", "G_shunt", "M", "Xd", "Xd_prime", "tau_U"}, where);
            n.kind = NodeKind::generator;
            n.inertia = get<double>(nj, "M", where);
            n.xd = get<double>(nj, "Xd", where);
            n.xd_prime = get<double>(nj, "Xd_prime", where);
            n.tau_u = get<double>(nj, "tau_U", where);
        } else if (kind == "load") {
            check_keys(nj, {"id", "kind", "A", "B_shunt", "G_shunt"}, where);
            n.kind = NodeKind::load;
        } else {
            throw ParseError(where + ": kind must be 'generator' or 'load'");
        }
        g.nodes.push_back(n);
    }
    const json lines = get<json>(j, "lines", "network");
    if (!lines.is_array()) throw ParseError("network: 'lines' must be an array");
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const std::string where = "network.lines[" + std::to_string(k) + "]";
        check_keys(lines[k], {"from", "to", "B"}, where);
        g.lines.push_back({get<int>(lines[k], "from", where), get<int>(lines[k], "to", where),
                           get<double>(lines[k], "B", where)});
    }
    return g;
}

std::vector<double> number_or_list(const json& j, const std::string& where)
{
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array() && !j.empty()) {
        std::vector<double> v;
        for (const auto& x : j) {
            if (!x.is_number()) throw ParseError(where + ": expected numbers");
            v.push_back(x.get<double>());
        }
        return v;
    }
    throw ParseError(where + ": expected a number or a nonempty list of numbers");
}

std::map<int, double> node_map(const json& j, const std::string& where)
{
    if (!j.is_object()) throw ParseError(where + ": expected an object keyed by node id");
    std::map<int, double> out;
    for (const auto& item : j.items()) {
        int id = 0;
        try {
            std::size_t pos = 0;
            id = std::stoi(item.key(), &pos);
            if (pos != item.key().size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParseError(where + ": key '" + item.key() + "' is not a node id");
        }
        if (!item.value().is_number()) throw ParseError(where + ": values must be numbers");
        out[id] = item.value().get<double>();
    }
    return out;
}

Event event_from_json(const json& j, const std::string& where)
{
    const auto type = get<std::string>(j, "type", where);
    if (type == "step_load") {
        check_keys(j, {"type", "time", "node", "delta"}, where);
        return StepLoad{get<double>(j, "time", where), get<int>(j, "node", where),
                        get<double>(j, "delta", where)};
    }
    if (type == "clock_drift") {
        check_keys(j, {"type", "from_time", "node", "offset_hz"}, where);
        return ClockDrift{get_or<double>(j, "from_time", 0.0, where), get<int>(j, "node", where),
                          get<double>(j, "offset_hz", where)};
    }
    if (type == "comm_failure") {
        check_keys(j, {"type", "time", "edge"}, where);
        const auto edge = get<std::vector<int>>(j, "edge", where);
        if (edge.size() != 2) throw ParseError(where + ": 'edge' needs two node ids");
        return CommEdgeFailure{get<double>(j, "time", where), edge[0], edge[1]};
    }
    throw ParseError(where + ": unknown event type '" + type + "'");
}

IntegratorConfig integrator_from_json(const json& j)
{
    const std::string where = "integrator";
    check_keys(j, {"scheme", "step", "output_interval", "algebraic_tol", "max_newton_iterations",
                   "max_frequency", "min_voltage"},
               where);
    IntegratorConfig c;
    const auto scheme = get_or<std::string>(j, "scheme", "rk4", where);
    if (scheme != "rk4") throw ParseError(where + ": only the 'rk4' scheme is available");
    c.step = get_or(j, "step", c.step, where);
    c.output_interval = get_or(j, "output_interval", c.output_interval, where);
    c.algebraic_tol = get_or(j, "algebraic_tol", c.algebraic_tol, where);
    c.max_newton_iterations = get_or(j, "max_newton_iterations", c.max_newton_iterations, where);
    c.max_frequency = get_or(j, "max_frequency", c.max_frequency, where);
    c.min_voltage = get_or(j, "min_voltage", c.min_voltage, where);
    return c;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ordered_json grid_to_json(const GridSpec& g, double eta)
{
    ordered_json j;
    j["eta"] = eta;
    j["nodes"] = ordered_json::array();
    for (const auto& n : g.nodes) {
        ordered_json nj;
        nj["id"] = n.id;
        nj["kind"] = n.kind == NodeKind::generator ? "generator" : "load";
        nj["A"] = n.damping;
        nj["B_shunt"] = n.shunt_susceptance;
        if (n.shunt_conductance != 0.0) nj["G_shunt"] = n.shunt_conductance;
        if (n.kind == NodeKind::generator) {
            nj["M"] = n.inertia;
            nj["Xd"] = n.xd;
            nj["Xd_prime"] = n.xd_prime;
            nj["tau_U"] = n.tau_u;
        }
        j["nodes"].push_back(nj);
    }
    j["lines"] = ordered_json::array();
    for (const auto& l : g.lines) {
        j["lines"].push_back({{"from", l.from}, {"to", l.to}, {"B", l.susceptance}});
    }
    return j;
}

ordered_json gain_json(const std::vector<double>& v)
{
    if (v.size() == 1) return v.front();
    return v;
}

}  // namespace

GridSpec parse_network(const std::string& text)
{
    return grid_from_json(parse_json(text, "network"));
}

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir)
{
    const json j = parse_json(text, "scenario");
    check_keys(j, {"name", "network", "eta", "communication", "cost", "gains", "mode", "p_load", "q_load",
                   "excitation", "events", "horizon", "integrator"},
               "scenario");
    Scenario s;
    s.name = get_or<std::string>(j, "name", s.name, "scenario");

    const json net = get<json>(j, "network", "scenario");
    if (net.is_string()) {
        const auto ref = net.get<std::string>();
        if (ref == "paper") {
            s.grid = paper_grid();
        } else {
            s.grid = parse_network(read_file(base_dir / ref));
        }
    } else {
        s.grid = grid_from_json(net);
    }
    s.eta = get_or<double>(j, "eta", s.grid.rx_ratio, "scenario");
    s.grid.rx_ratio = s.eta;

    if (j.contains("communication")) {
        const json& c = j.at("communication");
        if (c.is_string()) {
            try {
                s.comm = parse_comm_topology(c.get<std::string>());
            } catch (const ModelError& e) {
                throw ParseError(std::string("communication: ") + e.what());
            }
        } else {
            check_keys(c, {"edges"}, "communication");
            s.comm = get<std::vector<std::pair<int, int>>>(c, "edges", "communication");
        }
    }

    const json cost = get<json>(j, "cost", "scenario");
    check_keys(cost, {"weights"}, "cost");
    s.weights = get<std::vector<double>>(cost, "weights", "cost");

    if (j.contains("gains")) {
        const json& g = j.at("gains");
        check_keys(g, {"tau_g", "tau_lambda", "tau_nu"}, "gains");
        if (g.contains("tau_g")) s.gains.tau_gen = number_or_list(g.at("tau_g"), "gains.tau_g");
        if (g.contains("tau_lambda")) s.gains.tau_price = number_or_list(g.at("tau_lambda"), "gains.tau_lambda");
        if (g.contains("tau_nu")) s.gains.tau_flow = number_or_list(g.at("tau_nu"), "gains.tau_nu");
    }

    if (j.contains("mode")) {
        try {
            s.mode = parse_controller_mode(get<std::string>(j, "mode", "scenario"));
        } catch (const ModelError& e) {
            throw ParseError(std::string("mode: ") + e.what());
        }
    }
    if (j.contains("p_load")) s.p_load = node_map(j.at("p_load"), "p_load");
    if (j.contains("q_load")) s.q_load = node_map(j.at("q_load"), "q_load");

    if (j.contains("excitation")) {
        const json& e = j.at("excitation");
        check_keys(e, {"target_voltage", "values"}, "excitation");
        if (e.contains("values") && e.contains("target_voltage")) {
            throw ParseError("excitation: give either 'values' or 'target_voltage'");
        }
        if (e.contains("values")) s.excitation = get<std::vector<double>>(e, "values", "excitation");
        s.target_voltage = get_or(e, "target_voltage", s.target_voltage, "excitation");
    }

    if (j.contains("events")) {
        const json& ev = j.at("events");
        if (!ev.is_array()) throw ParseError("events: expected an array");
        for (std::size_t k = 0; k < ev.size(); ++k) {
            s.events.push_back(event_from_json(ev[k], "events[" + std::to_string(k) + "]"));
        }
    }
    s.horizon = get_or(j, "horizon", s.horizon, "scenario");
    if (j.contains("integrator")) s.integrator = integrator_from_json(j.at("integrator"));

    try {
        s.validate();
    } catch (const ModelError& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    return parse_scenario(read_file(path), path.parent_path());
}

std::string scenario_to_json(const Scenario& s)
{
    ordered_json j;
    j["name"] = s.name;
    j["network"] = grid_to_json(s.grid, s.eta);
    j["eta"] = s.eta;
    if (const auto* kind = std::get_if<CommTopology>(&s.comm)) {
        j["communication"] = std::string(to_string(*kind));
    } else {
        j["communication"] = {{"edges", std::get<std::vector<std::pair<int, int>>>(s.comm)}};
    }
    j["cost"] = {{"weights", s.weights}};
    j["gains"] = {{"tau_g", gain_json(s.gains.tau_gen)},
                  {"tau_lambda", gain_json(s.gains.tau_price)},
                  {"tau_nu", gain_json(s.gains.tau_flow)}};
    j["mode"] = std::string(to_string(s.mode));
    ordered_json pl = ordered_json::object();
    for (const auto& [id, v] : s.p_load) pl[std::to_string(id)] = v;
    j["p_load"] = pl;
    ordered_json ql = ordered_json::object();
    for (const auto& [id, v] : s.q_load) ql[std::to_string(id)] = v;
    j["q_load"] = ql;
    if (s.excitation) {
        j["excitation"] = {{"values", *s.excitation}};
    } else {
        j["excitation"] = {{"target_voltage", s.target_voltage}};
    }
    j["events"] = ordered_json::array();
    for (const auto& ev : s.events) {
        ordered_json e;
        if (const auto* st = std::get_if<StepLoad>(&ev)) {
            e = {{"type", "step_load"}, {"time", st->time}, {"node", st->node}, {"delta", st->delta}};
        } else if (const auto* d = std::get_if<ClockDrift>(&ev)) {
            e = {{"type", "clock_drift"}, {"from_time", d->from_time}, {"node", d->node},
                 {"offset_hz", d->offset_hz}};
        } else {
            const auto& c = std::get<CommEdgeFailure>(ev);
            e = {{"type", "comm_failure"}, {"time", c.time}, {"edge", {c.from, c.to}}};
        }
        j["events"].push_back(e);
    }
    j["horizon"] = s.horizon;
    const auto& c = s.integrator;
    j["integrator"] = {{"scheme", "rk4"},
                       {"step", c.step},
                       {"output_interval", c.output_interval},
                       {"algebraic_tol", c.algebraic_tol},
                       {"max_newton_iterations", c.max_newton_iterations},
                       {"max_frequency", c.max_frequency},
                       {"min_voltage", c.min_voltage}};
    return j.dump(2) + "\n";
}

GridSpec paper_grid()
{
    GridSpec g;
    g.rx_ratio = 1.0;
    const double a[] = {1.6, 1.2, 1.4, 1.4, 1.5, 1.3, 1.3};
    const double b[] = {-5.5, -5.5, -3.3, -3.1, -7.0, -2.0, -2.0};
    const double m[] = {5.2, 4.0, 4.5, 4.2, 4.4};
    const double xd[] = {0.02, 0.03, 0.03, 0.025, 0.02};
    const double xp[] = {0.004, 0.006, 0.005, 0.005, 0.003};
    const double tu[] = {6.45, 7.7, 8.3, 7.0, 7.36};
    for (int i = 0; i < 7; ++i) {
        NodeSpec n;
        n.id = i + 1;
        n.kind = i < 5 ? NodeKind::generator : NodeKind::load;
        n.damping = a[i];
        n.shunt_susceptance = b[i];
        if (i < 5) {
            n.inertia = m[i];
            n.xd = xd[i];
            n.xd_prime = xp[i];
            n.tau_u = tu[i];
        }
        g.nodes.push_back(n);
    }
    g.lines = {{1, 2, 1.27}, {1, 5, 1.4}, {1, 6, 2.0}, {2, 3, 1.4},
               {2, 5, 2.05}, {3, 4, 1.1}, {4, 5, 1.0}, {5, 7, 2.0}};
    return g;
}

Scenario builtin_paper_case()
{
    Scenario s;
    s.name = "paper";
    s.grid = paper_grid();
    s.eta = 1.0;
    s.comm = CommTopology::physical;
    s.weights = {1.0, 1.1, 1.2, 1.3, 1.4};
    s.gains.tau_gen = {0.1};
    s.gains.tau_price = {0.1};
    s.gains.tau_flow = {0.1};
    s.p_load = {{6, 0.3}, {7, 0.3}};
    s.q_load = {{6, 0.0}, {7, 0.0}};
    s.events = {StepLoad{30.0, 6, 0.1}, StepLoad{60.0, 7, 0.1}};
    s.horizon = 90.0;
    return s;
}

}  // namespace pricegrid

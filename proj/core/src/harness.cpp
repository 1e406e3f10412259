#include "pricegrid/harness.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <thread>

namespace pricegrid {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

double spread(const Vec& v)
{
    return v.size() == 0 ? 0.0 : v.maxCoeff() - v.minCoeff();
}

}  // namespace

std::string_view to_string(RunOutcome outcome)
{
    switch (outcome) {
    case RunOutcome::converged: return "converged";
    case RunOutcome::steady_offset: return "steady-offset";
    case RunOutcome::diverged: return "diverged";
    }
    return "unknown";
}

int exit_code(RunOutcome outcome)
{
    switch (outcome) {
    case RunOutcome::converged: return 0;
    case RunOutcome::steady_offset: return 10;
    case RunOutcome::diverged: return 11;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

SummaryReport summarize(const std::string& name, const Trajectory& trajectory, const Vec& weights,
                        double horizon)
{
    SummaryReport s;
    s.name = name;
    s.message = trajectory.message;
    s.horizon = horizon;
    s.weights = weights;
    const auto& samples = trajectory.samples;
    if (samples.empty()) {
        s.status = RunOutcome::diverged;
        s.final_max_omega_pu = s.final_max_omega_hz = kNaN;
        s.sharing_defect = s.price_spread = s.balance_residual = kNaN;
        return s;
    }
    s.end_time = samples.back().t;

    const double t0 = s.end_time - kTailWindow - 1e-9;
    Vec omega = Vec::Zero(samples.back().omega.size());
    Vec p_gen = Vec::Zero(weights.size());
    Vec price = Vec::Zero(samples.back().state.ctrl.price.size());
    double balance = 0.0;
    int count = 0;
    for (const auto& smp : samples) {
        if (smp.t < t0) continue;
        omega += smp.omega;
        p_gen += smp.state.ctrl.p_gen;
        price += smp.state.ctrl.price;
        balance += smp.balance_residual;
        ++count;
    }
    omega /= count;
    p_gen /= count;
    price /= count;
    s.final_omega_pu = omega;
    s.final_max_omega_pu = omega.cwiseAbs().maxCoeff();
    s.final_max_omega_hz = pu_to_hz(s.final_max_omega_pu);
    s.sharing_defect = spread(p_gen.cwiseQuotient(weights));
    s.price_spread = spread(price);
    s.balance_residual = balance / count;

    for (std::size_t e = 0; e < trajectory.events.size(); ++e) {
        SettlingTime st;
        st.event_time = trajectory.events[e].t;
        st.event = trajectory.events[e].description;
        const double t_next = e + 1 < trajectory.events.size() ? trajectory.events[e + 1].t
                                                              : std::numeric_limits<double>::infinity();
        std::size_t first = samples.size();
        std::size_t last = samples.size();
        std::optional<std::size_t> last_violation;
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const double t = samples[k].t;
            if (t < st.event_time - 1e-9 || t >= t_next - 1e-9) continue;
            if (first == samples.size()) first = k;
            last = k;
            if (samples[k].omega.cwiseAbs().maxCoeff() >= kSettlingBandPu) last_violation = k;
        }
        if (first == samples.size() || !last_violation) {
            st.settling = 0.0;
        } else if (*last_violation == last) {
            st.settling = kNaN;
        } else {
            st.settling = samples[*last_violation + 1].t - st.event_time;
        }
        s.settling.push_back(st);
    }

    if (trajectory.status == RunStatus::diverged) {
        s.status = RunOutcome::diverged;
    } else if (s.final_max_omega_hz < kConvergedHz) {
        s.status = RunOutcome::converged;
    } else {
        s.status = RunOutcome::steady_offset;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

ClosedLoopModel build_model(const Scenario& scenario)
{
    scenario.validate();
    ClosedLoopModel m;
    m.network = build_network(scenario.grid, scenario.eta);
    m.params = extract_params(scenario.grid, m.network);
    const int n = m.network.num_nodes();
    const int ng = m.network.num_generators();
    const int nl = m.network.num_loads();

    if (const auto* kind = std::get_if<CommTopology>(&scenario.comm)) {
        m.comm = build_comm_topology(*kind, m.network);
    } else {
        std::vector<std::pair<int, int>> edges;
        for (const auto& [a, b] : std::get<std::vector<std::pair<int, int>>>(scenario.comm)) {
            edges.emplace_back(m.network.index_of(a), m.network.index_of(b));
        }
        m.comm = CommGraph::from_edges(n, std::move(edges));
    }
    m.gains = scenario.gains.resolve(ng, n, m.comm.num_edges());
    m.cost = CostFunction::quadratic(Eigen::Map<const Vec>(scenario.weights.data(), ng));
    m.mode = scenario.mode;

    m.p_load = Vec::Zero(n);
    for (const auto& [id, v] : scenario.p_load) m.p_load(m.network.index_of(id)) = v;
    m.q_load = Vec::Zero(nl);
    for (const auto& [id, v] : scenario.q_load) m.q_load(m.network.index_of(id) - ng) = v;
    m.excitation = scenario.excitation ? Vec(Eigen::Map<const Vec>(scenario.excitation->data(), ng))
                                       : Vec::Constant(ng, scenario.target_voltage);
    m.drift = Vec::Zero(ng);
    return m;
}

PreparedRun prepare(const Scenario& scenario)
{
    PreparedRun p;
    p.model = build_model(scenario);
    p.problem = EquilibriumProblem::from_model(p.model);
    if (!scenario.excitation) {
        p.problem.excitation.reset();
        p.problem.target_voltage = scenario.target_voltage;
    }
    p.initial = solve_equilibrium(p.problem);
    p.model.excitation = p.initial.excitation;
    p.problem.excitation = p.initial.excitation;

    p.setup.model = p.model;
    p.setup.initial = p.initial.state;
    p.setup.events = scenario.events;
    p.setup.horizon = scenario.horizon;
    p.setup.config = scenario.integrator;
    return p;
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

RunResult run(const Scenario& scenario, const std::optional<fs::path>& out_dir)
{
    RunResult r;
    r.scenario = scenario;
    r.prepared = prepare(scenario);
    const auto& model = r.prepared.model;
    r.trajectory = simulate(r.prepared.setup);

    const ClosedLoopModel final_model = apply_events(model, scenario.events);
    try {
        r.post_fault = solve_equilibrium(EquilibriumProblem::from_model(final_model));
    } catch (const std::exception& e) {
        r.post_fault_error = e.what();
    }
    if (r.post_fault) {
        r.dissipation = dissipation_trace(r.trajectory, model, final_model, r.post_fault->state);
    }
    r.summary = summarize(scenario.name, r.trajectory, model.cost.weights(), scenario.horizon);

    if (out_dir) {
        fs::create_directories(*out_dir);
        {
            auto out = open_out(*out_dir / "scenario.json");
            out << scenario_to_json(scenario);
        }
        {
            auto out = open_out(*out_dir / "trajectory.csv");
            write_trajectory_csv(out, r);
        }
        {
            auto out = open_out(*out_dir / "passivity.csv");
            write_passivity_csv(out, r.dissipation);
        }
        {
            auto out = open_out(*out_dir / "summary.json");
            write_summary_json(out, r.summary);
        }
        {
            auto out = open_out(*out_dir / "equilibrium.csv");
            write_equilibrium_report(out, r.prepared.initial, r.prepared.problem);
        }
        if (r.post_fault) {
            auto out = open_out(*out_dir / "post_fault_equilibrium.csv");
            write_equilibrium_report(out, *r.post_fault, EquilibriumProblem::from_model(final_model));
        }
    }
    return r;
}

void write_trajectory_csv(std::ostream& out, const RunResult& result)
{
    const auto& traj = result.trajectory;
    const auto& net = result.prepared.model.network;
    const int n = net.num_nodes();
    const int ng = net.num_generators();

    out << "t";
    for (int i = 0; i < n; ++i) out << ",omega_" << net.id_of(i);
    for (int i = 0; i < ng; ++i) out << ",p_g_" << net.id_of(i);
    for (int i = 0; i < n; ++i) out << ",lambda_" << net.id_of(i);
    for (const auto& [a, b] : traj.comm_edges) out << ",nu_" << net.id_of(a) << '_' << net.id_of(b);
    for (int i = 0; i < n; ++i) out << ",U_" << net.id_of(i);
    out << ",H,Hbar,gap,balance\n";

    for (std::size_t k = 0; k < traj.samples.size(); ++k) {
        const auto& s = traj.samples[k];
        out << num(s.t);
        for (int i = 0; i < n; ++i) out << ',' << num(s.omega(i));
        for (int i = 0; i < ng; ++i) out << ',' << num(s.state.ctrl.p_gen(i));
        for (int i = 0; i < n; ++i) out << ',' << num(s.state.ctrl.price(i));
        std::size_t next = 0;
        for (std::size_t e = 0; e < traj.comm_edges.size(); ++e) {
            if (next < s.active_edges.size() && s.active_edges[next] == static_cast<int>(e)) {
                out << ',' << num(s.state.ctrl.flow(static_cast<Eigen::Index>(next)));
                ++next;
            } else {
                out << ",nan";
            }
        }
        const Vec u = s.state.plant.voltages();
        for (int i = 0; i < n; ++i) out << ',' << num(u(i));
        const bool have = k < result.dissipation.size();
        out << ',' << num(s.hamiltonian) << ',' << num(have ? result.dissipation[k].shifted : kNaN) << ','
            << num(have ? result.dissipation[k].gap : kNaN) << ',' << num(s.balance_residual) << '\n';
    }
}

void write_passivity_csv(std::ostream& out, const std::vector<DissipationSample>& trace)
{
    out << "t,H,Hbar,gap,status,supply,dHbar_dt,predicted_rate\n";
    for (const auto& d : trace) {
        out << num(d.t) << ',' << num(d.hamiltonian) << ',' << num(d.shifted) << ',' << num(d.gap) << ','
            << d.status << ',' << num(d.supply) << ',' << num(d.dshifted_dt) << ','
            << num(d.predicted_rate) << '\n';
    }
}

void write_summary_json(std::ostream& out, const SummaryReport& s)
{
    using nlohmann::ordered_json;
    auto finite = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    ordered_json j;
    j["name"] = s.name;
    j["status"] = std::string(to_string(s.status));
    j["message"] = s.message;
    j["horizon"] = s.horizon;
    j["end_time"] = s.end_time;
    j["tail_window"] = kTailWindow;
    j["final_max_omega_pu"] = finite(s.final_max_omega_pu);
    j["final_max_omega_hz"] = finite(s.final_max_omega_hz);
    ordered_json omega = ordered_json::array();
    for (Eigen::Index i = 0; i < s.final_omega_pu.size(); ++i) omega.push_back(finite(s.final_omega_pu(i)));
    j["final_omega_pu"] = omega;
    j["sharing_defect"] = finite(s.sharing_defect);
    j["price_spread"] = finite(s.price_spread);
    j["balance_residual"] = finite(s.balance_residual);
    j["settling_band_pu"] = kSettlingBandPu;
    ordered_json settling = ordered_json::array();
    for (const auto& st : s.settling) {
        settling.push_back({{"event_time", st.event_time}, {"event", st.event}, {"settling", finite(st.settling)}});
    }
    j["settling"] = settling;
    j["weights"] = std::vector<double>(s.weights.data(), s.weights.data() + s.weights.size());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SweepParameter parse_sweep_parameter(std::string_view name)
{
    if (name == "eta") return SweepParameter::eta;
    if (name == "topology") return SweepParameter::topology;
    throw ModelError("unknown sweep parameter '" + std::string(name) + "' (expected eta or topology)");
}

std::string_view to_string(SweepParameter parameter)
{
    return parameter == SweepParameter::eta ? "eta" : "topology";
}

Scenario with_parameter(const Scenario& base, SweepParameter parameter, const std::string& value)
{
    Scenario s = base;
    if (parameter == SweepParameter::eta) {
        std::size_t pos = 0;
        double eta = 0.0;
        try {
            eta = std::stod(value, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != value.size()) throw ModelError("eta value '" + value + "' is not a number");
        s.eta = eta;
        s.grid.rx_ratio = eta;
    } else {
        s.comm = parse_comm_topology(value);
    }
    s.name = base.name + "_" + std::string(to_string(parameter)) + "_" + value;
    return s;
}

namespace {

// Runs jobs[i] for every i on a bounded pool; results land at their index.
template <typename Job>
std::vector<SweepRow> run_pool(std::size_t count, int workers, Job job)
{
    std::vector<SweepRow> rows(count);
    if (count == 0) return rows;
    std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                      : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            rows[i] = job(i);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

SweepRow run_row(const std::string& label, const Scenario& scenario, const std::optional<fs::path>& dir)
{
    SweepRow row;
    row.value = label;
    try {
        row.summary = run(scenario, dir).summary;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

void write_rows(std::ostream& out, const std::vector<SweepRow>& rows)
{
    for (const auto& r : rows) {
        out << r.value << ',';
        if (r.summary) {
            const auto& s = *r.summary;
            out << to_string(s.status) << ',' << num(s.final_max_omega_hz) << ',' << num(s.sharing_defect)
                << ',' << num(s.price_spread) << ',' << num(s.balance_residual) << ',' << num(s.end_time)
                << ',';
        } else {
            out << "error,nan,nan,nan,nan,nan,";
        }
        std::string msg = r.summary ? r.summary->message : r.error;
        for (char& c : msg) {
            if (c == ',' || c == '\n') c = ';';
        }
        out << msg << '\n';
    }
}

}  // namespace

std::vector<SweepRow> sweep(const Scenario& base, SweepParameter parameter,
                            const std::vector<std::string>& values, const std::optional<fs::path>& out_dir,
                            int workers)
{
    auto rows = run_pool(values.size(), workers, [&](std::size_t i) {
        SweepRow row;
        row.value = values[i];
        Scenario s;
        try {
            s = with_parameter(base, parameter, values[i]);
        } catch (const std::exception& e) {
            row.error = e.what();
            return row;
        }
        std::optional<fs::path> dir;
        if (out_dir) dir = *out_dir / (std::string(to_string(parameter)) + "_" + values[i]);
        row = run_row(values[i], s, dir);
        return row;
    });
    if (out_dir) {
        fs::create_directories(*out_dir);
        auto out = open_out(*out_dir / "sweep.csv");
        write_sweep_csv(out, parameter, rows);
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, SweepParameter parameter, const std::vector<SweepRow>& rows)
{
    out << to_string(parameter)
        << ",status,final_max_omega_hz,sharing_defect,price_spread,balance_residual,end_time,message\n";
    write_rows(out, rows);
}

std::vector<SuiteEntry> paper_suite_entries()
{
    const Scenario base = builtin_paper_case();
    std::vector<SuiteEntry> entries;
    for (const char* topo : {"a", "b", "c", "d"}) {
        entries.push_back({"topology", topo, with_parameter(base, SweepParameter::topology, topo)});
    }
    for (const char* eta : {"0.25", "0.5", "1"}) {
        Scenario s = with_parameter(base, SweepParameter::eta, eta);
        s.mode = ControllerMode::lossless;
        s.name = base.name + "_lossless_eta_" + eta;
        entries.push_back({"lossless", std::string("eta_") + eta, s});
    }
    for (const char* eta : {"0.5", "1", "2", "3"}) {
        entries.push_back({"rx_ratio", std::string("eta_") + eta, with_parameter(base, SweepParameter::eta, eta)});
    }
    {
        Scenario s = base;
        s.name = base.name + "_clock_drift";
        s.events.insert(s.events.begin(), ClockDrift{0.0, 1, -1.0});
        entries.push_back({"clock_drift", "node_1", s});
    }
    {
        Scenario s = base;
        s.name = base.name + "_comm_failure";
        s.events.insert(s.events.begin(), CommEdgeFailure{15.0, 1, 2});
        entries.push_back({"comm_failure", "edge_1_2", s});
    }
    return entries;
}

std::vector<SweepRow> paper_suite(const fs::path& out_dir, int workers)
{
    const auto entries = paper_suite_entries();
    auto rows = run_pool(entries.size(), workers, [&](std::size_t i) {
        const auto& e = entries[i];
        return run_row(e.experiment + "/" + e.variant, e.scenario, out_dir / (e.experiment + "_" + e.variant));
    });
    fs::create_directories(out_dir);
    auto out = open_out(out_dir / "suite.csv");
    out << "experiment,status,final_max_omega_hz,sharing_defect,price_spread,balance_residual,end_time,message\n";
    write_rows(out, rows);
    return rows;
}

}  // namespace pricegrid

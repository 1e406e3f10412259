// Acceptance checks for the paper scenarios and the property suite.
//
// Usage: pricegrid_acceptance [criterion...]
// Prints one PASS/FAIL line per criterion; exits nonzero when any fails.

#include "fixtures.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>

using namespace pgtest;

namespace {

constexpr double kRestoreHz = 1e-3;        // criterion 1, within 20 s of each step
constexpr double kRestoreWindow = 20.0;    // [s]
constexpr double kFinalHz = 1e-5;          // criterion 1, at t = 90 s
constexpr double kRuntimeLimit = 10.0;     // [s] wall clock per run
constexpr double kSharingTol = 1e-6;       // criterion 2
constexpr double kExtendedHorizon = 240.0; // [s]
constexpr double kDispatchTol = 1e-8;      // criterion 3
constexpr double kBalanceTol = 1e-8;       // criterion 4
constexpr double kLosslessOffsetHz = 0.01; // criterion 5
constexpr double kGapTol = 1e-9;           // criterion 6
constexpr double kDriftSharing = 1e-2;     // criterion 7
constexpr double kGradientTol = 1e-6;      // 9a
constexpr double kFormTol = 1e-12;         // 9c
constexpr double kMinOrder = 3.7;          // 9d
constexpr double kIdempotenceTol = 1e-8;   // 9e
constexpr double kKktTol = 1e-7;           // 9g

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

void append(std::string& s, const std::string& part)
{
    if (!s.empty()) s += "; ";
    s += part;
}

double spread(const Vec& v) { return v.maxCoeff() - v.minCoeff(); }

double max_hz(const TrajectorySample& s) { return pu_to_hz(s.omega.cwiseAbs().maxCoeff()); }

const SuiteEntry& entry(const std::string& experiment, const std::string& variant)
{
    static const std::vector<SuiteEntry> entries = paper_suite_entries();
    for (const auto& e : entries) {
        if (e.experiment == experiment && e.variant == variant) return e;
    }
    throw std::runtime_error("no suite entry " + experiment + "/" + variant);
}

struct TimedRun {
    RunResult result;
    double seconds = 0.0;
};

const TimedRun& suite_run(const std::string& experiment, const std::string& variant)
{
    static std::map<std::string, TimedRun> cache;
    const std::string key = experiment + "/" + variant;
    auto it = cache.find(key);
    if (it == cache.end()) {
        const auto t0 = std::chrono::steady_clock::now();
        RunResult r = run(entry(experiment, variant).scenario);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        it = cache.emplace(key, TimedRun{std::move(r), dt.count()}).first;
    }
    return it->second;
}

const std::vector<std::string> kTopologies = {"a", "b", "c", "d"};

/// Steady states of every lossy suite scenario before and after its events.
struct NamedEquilibrium {
    std::string name;
    ClosedLoopModel model;
    EquilibriumSolution solution;

    /// A biased frequency measurement moves the steady state off the
    /// optimum by the bias itself.
    bool measured_correctly() const { return model.drift.cwiseAbs().maxCoeff() == 0.0; }
};

const std::vector<NamedEquilibrium>& lossy_equilibria()
{
    static const std::vector<NamedEquilibrium> all = [] {
        std::vector<NamedEquilibrium> out;
        for (const auto& e : paper_suite_entries()) {
            if (e.scenario.mode != ControllerMode::lossy) continue;
            const PreparedRun prep = prepare(e.scenario);
            const std::string name = e.experiment + "/" + e.variant;
            out.push_back({name + " pre", prep.model, prep.initial});
            const ClosedLoopModel post = apply_events(prep.model, e.scenario.events);
            out.push_back({name + " post", post, solve_equilibrium(EquilibriumProblem::from_model(post))});
        }
        return out;
    }();
    return all;
}

// ---------------------------------------------------------------------------

Verdict frequency_restoration()
{
    Verdict v;
    for (const auto& topo : kTopologies) {
        const TimedRun& tr = suite_run("topology", topo);
        const Trajectory& traj = tr.result.trajectory;
        bool ok = traj.status == RunStatus::completed && tr.seconds < kRuntimeLimit;
        std::string part = fmt("%s:", topo.c_str());
        for (std::size_t e = 0; e < traj.events.size(); ++e) {
            const double te = traj.events[e].t;
            const double next = e + 1 < traj.events.size() ? traj.events[e + 1].t : traj.end_time + 1.0;
            double worst = 0.0;
            double settled = te;
            for (const auto& s : traj.samples) {
                if (s.t < te || s.t >= next) continue;
                if (max_hz(s) >= kRestoreHz) settled = s.t;
                if (s.t >= te + kRestoreWindow) worst = std::max(worst, max_hz(s));
            }
            ok = ok && worst < kRestoreHz;
            part += fmt(" settle(t=%g)=%.1fs max|w|@+20s=%.2e Hz", te, settled - te, worst);
        }
        const double final_hz = traj.samples.empty() ? NAN : max_hz(traj.samples.back());
        ok = ok && std::abs(traj.samples.back().t - 90.0) < 1e-9 && final_hz < kFinalHz;
        part += fmt(" |w|(90s)=%.2e Hz runtime=%.2fs", final_hz, tr.seconds);
        v.pass = v.pass && ok;
        append(v.detail, part);
    }
    return v;
}

Verdict power_sharing()
{
    Verdict v;
    for (const auto& topo : kTopologies) {
        Scenario s = entry("topology", topo).scenario;
        s.horizon = kExtendedHorizon;
        const RunResult r = run(s);
        const auto& last = r.trajectory.samples.back();
        const Vec w = r.prepared.model.cost.weights();
        const double traj_spread = spread(last.state.ctrl.p_gen.cwiseQuotient(w));
        bool ok = r.trajectory.status == RunStatus::completed && r.post_fault.has_value();
        double eq_spread = NAN, distance = NAN;
        if (r.post_fault) {
            eq_spread = spread(r.post_fault->state.ctrl.p_gen.cwiseQuotient(w));
            distance = (last.state.ctrl.p_gen - r.post_fault->state.ctrl.p_gen).cwiseAbs().maxCoeff();
        }
        ok = ok && traj_spread < kSharingTol && eq_spread < kSharingTol;
        v.pass = v.pass && ok;
        append(v.detail, fmt("%s: spread(t=%gs)=%.2e equilibrium=%.2e |p_g-pbar|=%.2e", topo.c_str(), last.t,
                             traj_spread, eq_spread, distance));
    }
    return v;
}

Verdict economic_dispatch()
{
    Verdict v;
    double worst_spread = 0.0, worst_marginal = 0.0;
    int count = 0, skipped = 0;
    for (const auto& eq : lossy_equilibria()) {
        if (!eq.measured_correctly()) {
            ++skipped;
            continue;
        }
        ++count;
        const ControllerState& c = eq.solution.state.ctrl;
        const double price_spread = spread(c.price);
        const Vec marginal = cost_gradient(eq.model.cost, c.p_gen);
        double dev = 0.0;
        for (int i = 0; i < marginal.size(); ++i) dev = std::max(dev, std::abs(marginal[i] - c.price[i]));
        worst_spread = std::max(worst_spread, price_spread);
        worst_marginal = std::max(worst_marginal, dev);
        if (price_spread >= kDispatchTol || dev >= kDispatchTol) {
            v.pass = false;
            append(v.detail, eq.name + fmt(" spread %.2e |gradC-lambda| %.2e", price_spread, dev));
        }
    }
    append(v.detail, fmt("%d steady states (%d with clock drift left to criterion 7), max lambda spread %.2e, "
                         "max |gradC - lambda| %.2e",
                         count, skipped, worst_spread, worst_marginal));
    return v;
}

Verdict power_balance_check()
{
    Verdict v;
    double worst = 0.0;
    for (const auto& eq : lossy_equilibria()) {
        const PlantState& x = eq.solution.state.plant;
        const PowerBalance b =
            power_balance(eq.solution.state.ctrl.p_gen, eq.model.p_load, x.theta, x.voltages(), eq.model.network);
        worst = std::max(worst, std::abs(b.residual));
        if (std::abs(b.residual) >= kBalanceTol) {
            v.pass = false;
            append(v.detail, eq.name + fmt(" residual %.2e", b.residual));
        }
    }
    append(v.detail, fmt("%zu steady states, max |surplus - losses| %.2e", lossy_equilibria().size(), worst));
    return v;
}

Verdict lossless_comparison()
{
    Verdict v;
    double previous = 0.0;
    bool monotone = true;
    double at_one = 0.0;
    for (const char* eta : {"0.25", "0.5", "1"}) {
        const RunResult& r = suite_run("lossless", std::string("eta_") + eta).result;
        const double offset = r.summary.final_omega_pu.size() ? pu_to_hz(r.summary.final_omega_pu.mean()) : NAN;
        const auto eq = solve_equilibrium(EquilibriumProblem::from_model(r.trajectory.final_model));
        const double magnitude = std::abs(offset);
        monotone = monotone && magnitude > previous;
        previous = magnitude;
        if (std::string(eta) == "1") at_one = magnitude;
        v.pass = v.pass && r.trajectory.status == RunStatus::completed;
        append(v.detail, fmt("eta %s: offset %.4f Hz (steady state %.4f Hz, %s)", eta, offset,
                             pu_to_hz(eq.sync_freq), std::string(to_string(r.summary.status)).c_str()));
    }
    v.pass = v.pass && monotone && at_one > kLosslessOffsetHz;
    append(v.detail, monotone ? "increasing in eta" : "NOT increasing in eta");
    return v;
}

Verdict rx_sweep()
{
    Verdict v;
    for (const char* eta : {"0.5", "1", "2", "3"}) {
        const RunResult& r = suite_run("rx_ratio", std::string("eta_") + eta).result;
        double min_gap = INFINITY;
        double first_negative = NAN;
        for (const auto& d : r.dissipation) {
            if (d.gap < min_gap) min_gap = d.gap;
            if (std::isnan(first_negative) && d.gap < -kGapTol) first_negative = d.t;
        }
        const std::string status(to_string(r.summary.status));
        std::string part = fmt("eta %s: %s, min gap %.2e", eta, status.c_str(), min_gap);
        if (!std::isnan(first_negative)) part += fmt(" (first < -1e-9 at t=%.2f)", first_negative);
        if (r.summary.status == RunOutcome::diverged) part += fmt(", stopped at t=%.2f", r.trajectory.end_time);
        const std::string e(eta);
        if (e == "0.5" || e == "1") {
            v.pass = v.pass && min_gap >= -kGapTol && r.summary.status == RunOutcome::converged;
        } else if (e == "3") {
            v.pass = v.pass && r.summary.status == RunOutcome::diverged && !std::isnan(first_negative) &&
                     first_negative < r.trajectory.end_time;
        }
        append(v.detail, part);
    }
    return v;
}

Verdict clock_drift()
{
    const RunResult& r = suite_run("clock_drift", "node_1").result;
    Verdict v;
    v.pass = r.summary.status == RunOutcome::converged && r.summary.final_max_omega_hz < kRestoreHz &&
             r.summary.sharing_defect > kDriftSharing;
    v.detail = fmt("%s, steady max |w| %.2e Hz, sharing defect %.3e",
                   std::string(to_string(r.summary.status)).c_str(), r.summary.final_max_omega_hz,
                   r.summary.sharing_defect);
    return v;
}

Verdict comm_failure()
{
    const RunResult& r = suite_run("comm_failure", "edge_1_2").result;
    Verdict v;
    const bool completed = r.trajectory.status == RunStatus::completed &&
                           std::abs(r.trajectory.end_time - r.scenario.horizon) < 1e-9;
    v.pass = completed;
    v.detail = fmt("%s, steady offset %.3e Hz (max node), mean %.3e Hz, sharing defect %.3e",
                   std::string(to_string(r.summary.status)).c_str(), r.summary.final_max_omega_hz,
                   pu_to_hz(r.summary.final_omega_pu.mean()), r.summary.sharing_defect);
    if (r.post_fault) {
        v.detail += fmt(", post-fault steady state offset %.3e Hz", pu_to_hz(r.post_fault->sync_freq));
    } else {
        v.detail += ", no post-fault steady state: " + r.post_fault_error;
    }
    return v;
}

// Property suite -------------------------------------------------------------

ClosedLoopState random_state(const ClosedLoopModel& m, std::mt19937& rng)
{
    ClosedLoopState x;
    x.plant = random_plant_state(m.network, m.params, rng);
    x.ctrl = random_controller_state(m.network.num_generators(), m.network.num_nodes(), m.comm.num_edges(), rng);
    return x;
}

double gradient_error()
{
    Paper p;
    std::mt19937 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const PlantState x = random_plant_state(p.net, p.params, rng);
        const Vec g = plant_gradient(x, p.net, p.params).pack();
        const Vec v = x.pack();
        Vec fd(v.size());
        for (int k = 0; k < v.size(); ++k) {
            Vec a = v, b = v;
            a[k] += 1e-6;
            b[k] -= 1e-6;
            fd[k] = (plant_hamiltonian(PlantState::unpack(a, p.net), p.net, p.params) -
                     plant_hamiltonian(PlantState::unpack(b, p.net), p.net, p.params)) /
                    2e-6;
        }
        worst = std::max(worst, (fd - g).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff());
    }
    return worst;
}

double skew_defect()
{
    double worst = 0.0;
    std::mt19937 rng(103);
    for (const auto& topo : kTopologies) {
        const ClosedLoopModel m = build_model(entry("topology", topo).scenario);
        const Mat j = assemble_blocks(m, random_state(m, rng)).j;
        const Mat jc = controller_interconnection(m.comm, m.network.num_generators());
        const Mat jp = assemble_plant_structure(random_plant_state(m.network, m.params, rng), m.network, m.params)
                           .interconnection;
        worst = std::max({worst, (j + j.transpose()).cwiseAbs().maxCoeff(),
                          (jc + jc.transpose()).cwiseAbs().maxCoeff(), (jp + jp.transpose()).cwiseAbs().maxCoeff()});
    }
    return worst;
}

double form_disagreement()
{
    const ClosedLoopModel m = paper_run().model;
    std::mt19937 rng(107);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const ClosedLoopState x = random_state(m, rng);
        worst = std::max(worst, (block_rhs(m, x) - composed_rhs(m, x)).cwiseAbs().maxCoeff());
    }
    return worst;
}

double measured_order()
{
    const ClosedLoopModel& m = paper_run().model;
    IntegratorConfig c;
    c.algebraic_tol = 1e-13;
    ClosedLoopState x0 = paper_run().initial.state;
    x0.plant.momentum[0] += 0.02;
    x0.plant.gen_voltage[3] += 0.01;
    x0.ctrl.price[5] += 0.05;
    make_consistent(m, x0, c);
    const auto integrate = [&](double h) {
        ClosedLoopState x = x0;
        const int n = static_cast<int>(std::lround(1.0 / h));
        for (int k = 0; k < n; ++k) x = step(m, x, h, c);
        return differential_state(x);
    };
    const Vec ref = integrate(0.0005);
    const double e1 = (integrate(0.02) - ref).norm();
    const double e2 = (integrate(0.01) - ref).norm();
    const double e3 = (integrate(0.005) - ref).norm();
    return std::min(std::log2(e1 / e2), std::log2(e2 / e3));
}

double idempotence_drift()
{
    const PreparedRun& run = paper_run();
    SimulationSetup setup;
    setup.model = run.model;
    setup.initial = run.initial.state;
    setup.horizon = 100.0;
    setup.config.output_interval = 0.5;
    const Trajectory traj = simulate(setup);
    if (traj.status != RunStatus::completed) return INFINITY;
    const Vec d0 = differential_state(run.initial.state);
    double drift = 0.0;
    for (const auto& s : traj.samples) {
        drift = std::max(drift, (differential_state(s.state) - d0).cwiseAbs().maxCoeff());
    }
    return drift;
}

std::pair<double, double> shifted_extremes()
{
    const PreparedRun& run = paper_run();
    const ClosedLoopModel& m = run.model;
    const ClosedLoopState& xbar = run.initial.state;
    const Vec vbar = pack_scaled(m, xbar);
    std::mt19937 rng(109);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double smallest = INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        Vec d = Vec::NullaryExpr(vbar.size(), [&] { return n(rng); });
        d = d.normalized() * 0.1 * std::pow(u(rng), 1.0 / static_cast<double>(vbar.size()));
        smallest = std::min(smallest, shifted_hamiltonian(m, unpack_scaled(m, vbar + d), xbar));
    }
    return {std::abs(shifted_hamiltonian(m, xbar, xbar)), smallest};
}

double worst_kkt()
{
    double worst = 0.0;
    for (const auto& eq : lossy_equilibria()) {
        if (!eq.measured_correctly()) continue;
        const PlantState& x = eq.solution.state.plant;
        const Vec phi = conductance_terms(x.theta, x.voltages(), eq.model.network, eq.model.params.gen).phi;
        worst = std::max(
            worst, kkt_residual(eq.solution.state.ctrl, eq.model.p_load, phi, eq.model.comm, eq.model.cost).max());
    }
    return worst;
}

Verdict property_suite()
{
    Verdict v;
    const double a = gradient_error();
    const double b = skew_defect();
    const double c = form_disagreement();
    const double d = measured_order();
    const double e = idempotence_drift();
    const auto [f0, fmin] = shifted_extremes();
    const double g = worst_kkt();
    const auto mark = [](bool ok) { return ok ? "ok" : "FAIL"; };
    v.pass = a < kGradientTol && b == 0.0 && c < kFormTol && d >= kMinOrder && e < kIdempotenceTol && f0 < 1e-12 &&
             fmin > 0.0 && g < kKktTol;
    v.detail = fmt("(a) grad rel err %.2e %s; (b) max|J+J^T| %.1e %s; (c) block vs scalar %.2e %s; "
                   "(d) RK4 order %.2f %s; (e) idempotence drift %.2e %s; (f) Hbar(xbar) %.1e, min Hbar %.2e %s; "
                   "(g) KKT %.2e %s",
                   a, mark(a < kGradientTol), b, mark(b == 0.0), c, mark(c < kFormTol), d, mark(d >= kMinOrder), e,
                   mark(e < kIdempotenceTol), f0, fmin, mark(f0 < 1e-12 && fmin > 0.0), g, mark(g < kKktTol));
    return v;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<Criterion> criteria = {
        {1, "frequency restoration", frequency_restoration},
        {2, "active power sharing", power_sharing},
        {3, "economic dispatch", economic_dispatch},
        {4, "power balance", power_balance_check},
        {5, "lossless controller offset", lossless_comparison},
        {6, "R/X sweep", rx_sweep},
        {7, "clock drift", clock_drift},
        {8, "communication failure", comm_failure},
        {9, "property suite", property_suite},
    };

    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

    bool all = true;
    for (const auto& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        all = all && v.pass;
        std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}

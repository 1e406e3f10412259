#include "pricegrid/dae.hpp"

#include "pricegrid/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pricegrid {

void IntegratorConfig::validate() const
{
    detail::require(step > 0.0, "integrator step must be positive");
    detail::require(output_interval > 0.0, "output interval must be positive");
    detail::require(algebraic_tol > 0.0, "algebraic tolerance must be positive");
    detail::require(max_newton_iterations > 0, "Newton iteration limit must be positive");
    detail::require(max_frequency > 0.0 && min_voltage >= 0.0, "invalid divergence bounds");
}

double event_time(const Event& event)
{
    return std::visit(
        [](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, ClockDrift>) {
                return e.from_time;
            } else {
                return e.time;
            }
        },
        event);
}

std::string describe(const Event& event)
{
    std::ostringstream out;
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, StepLoad>) {
                out << "step load " << e.delta << " p.u. at node " << e.node;
            } else if constexpr (std::is_same_v<T, ClockDrift>) {
                out << "clock drift " << e.offset_hz << " Hz at node " << e.node;
            } else {
                out << "communication failure on edge (" << e.from << ", " << e.to << ")";
            }
        },
        event);
    return out.str();
}

// ---------------------------------------------------------------------------
// Algebraic subsystem
// ---------------------------------------------------------------------------

AlgebraicSolution solve_algebraic(const PlantState& x, const PlantInput& u, const Network& network,
                                  const PlantParams& params, double tol, int max_iterations)
{
    const int nl = network.num_loads();
    const Vec& a_load = params.load.damping;

    AlgebraicSolution sol;
    sol.load_freq = x.load_freq;
    sol.load_voltage = x.load_voltage;
    if (nl == 0) {
        return sol;
    }

    Vec voltage = x.voltages();
    auto residual = [&](const Vec& volt, const Vec& freq) {
        const PowerFlows flows = power_flows(x.theta, volt, network);
        Vec g(2 * nl);
        g.head(nl) = -a_load.cwiseProduct(freq) - u.p_load.tail(nl) - flows.p.tail(nl);
        g.tail(nl) = -u.q_load - flows.q.tail(nl);
        return g;
    };

    Vec g = residual(voltage, sol.load_freq);
    double norm = g.cwiseAbs().maxCoeff();
    while (norm >= tol) {
        if (sol.iterations >= max_iterations || !std::isfinite(norm)) {
            std::ostringstream msg;
            msg << "load-node Newton iteration failed after " << sol.iterations
                << " iterations (residual " << norm << ")";
            throw SolverError(msg.str());
        }
        const PowerFlowJacobian jac = power_flow_jacobian(x.theta, voltage, network);
        Mat j = Mat::Zero(2 * nl, 2 * nl);
        j.topLeftCorner(nl, nl) = -Mat(a_load.asDiagonal());
        j.topRightCorner(nl, nl) = -jac.dp_dvoltage.bottomRightCorner(nl, nl);
        j.bottomRightCorner(nl, nl) = -jac.dq_dvoltage.bottomRightCorner(nl, nl);
        const Vec delta = j.partialPivLu().solve(-g);

        // Halve the step until the load voltages stay positive.
        double scale = 1.0;
        Vec trial_voltage = voltage;
        for (int k = 0; k < 30; ++k) {
            trial_voltage.tail(nl) = voltage.tail(nl) + scale * delta.tail(nl);
            if ((trial_voltage.tail(nl).array() > 0.0).all()) break;
            scale *= 0.5;
        }
        voltage = trial_voltage;
        sol.load_freq += scale * delta.head(nl);
        ++sol.iterations;
        g = residual(voltage, sol.load_freq);
        norm = g.cwiseAbs().maxCoeff();
    }
    sol.load_voltage = voltage.tail(nl);
    sol.residual = norm;
    return sol;
}

// ---------------------------------------------------------------------------
// Closed-loop right-hand side
// ---------------------------------------------------------------------------

Vec differential_state(const ClosedLoopState& state)
{
    const auto& p = state.plant;
    const auto& c = state.ctrl;
    Vec d(p.theta.size() + p.momentum.size() + p.gen_voltage.size() + c.size());
    d << p.theta, p.momentum, p.gen_voltage, c.p_gen, c.price, c.flow;
    return d;
}

ClosedLoopState with_differential_state(const ClosedLoopState& like, const Vec& diff)
{
    ClosedLoopState s = like;
    Eigen::Index o = 0;
    auto take = [&](Vec& v) {
        v = diff.segment(o, v.size());
        o += v.size();
    };
    take(s.plant.theta);
    take(s.plant.momentum);
    take(s.plant.gen_voltage);
    take(s.ctrl.p_gen);
    take(s.ctrl.price);
    take(s.ctrl.flow);
    detail::require(o == diff.size(), "differential state vector has wrong size");
    return s;
}

Vec closed_loop_rhs(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const auto& net = model.network;
    const int ng = net.num_generators();
    const PlantResiduals pr =
        plant_residuals(state.plant, model.plant_input(state.ctrl.p_gen), net, model.params);
    const ConductanceTerms terms =
        conductance_terms(state.plant.theta, state.plant.voltages(), net, model.params.gen);
    const Vec omega_gen = state.plant.momentum.cwiseQuotient(model.params.gen.inertia);
    const ControllerState dc = controller_rhs(state.ctrl, omega_gen + model.drift, model.p_load,
                                              terms.phi, model.comm, model.gains, model.cost,
                                              model.mode);
    Vec d(pr.theta_dot.size() + 2 * ng + dc.size());
    d << pr.theta_dot, pr.momentum_dot, pr.voltage_dot, dc.p_gen, dc.price, dc.flow;
    return d;
}

double algebraic_residual(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    if (model.network.num_loads() == 0) {
        return 0.0;
    }
    const PlantResiduals pr = plant_residuals(state.plant, model.plant_input(state.ctrl.p_gen),
                                              model.network, model.params);
    return std::max(pr.freq_residual.cwiseAbs().maxCoeff(), pr.voltage_residual.cwiseAbs().maxCoeff());
}

void make_consistent(const ClosedLoopModel& model, ClosedLoopState& state,
                     const IntegratorConfig& config)
{
    const AlgebraicSolution sol =
        solve_algebraic(state.plant, model.plant_input(state.ctrl.p_gen), model.network, model.params,
                        config.algebraic_tol, config.max_newton_iterations);
    state.plant.load_freq = sol.load_freq;
    state.plant.load_voltage = sol.load_voltage;
}

ClosedLoopState step(const ClosedLoopModel& model, const ClosedLoopState& state, double h,
                     const IntegratorConfig& config)
{
    const Vec x0 = differential_state(state);

    // Each stage needs algebraic states consistent with its differential
    // point; the previous stage's solution is the warm start.
    ClosedLoopState stage = state;
    auto eval = [&](const Vec& diff) {
        stage = with_differential_state(stage, diff);
        make_consistent(model, stage, config);
        return closed_loop_rhs(model, stage);
    };

    const Vec k1 = closed_loop_rhs(model, state);
    const Vec k2 = eval(x0 + 0.5 * h * k1);
    const Vec k3 = eval(x0 + 0.5 * h * k2);
    const Vec k4 = eval(x0 + h * k3);

    ClosedLoopState next = with_differential_state(state, x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    next.plant.load_freq = stage.plant.load_freq;
    next.plant.load_voltage = stage.plant.load_voltage;
    make_consistent(model, next, config);
    return next;
}

// ---------------------------------------------------------------------------
// Simulation driver
// ---------------------------------------------------------------------------

int apply_to_model(const Event& event, ClosedLoopModel& model)
{
    const auto& net = model.network;
    int removed = -1;
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, StepLoad>) {
                model.p_load(net.index_of(e.node)) += e.delta;
            } else if constexpr (std::is_same_v<T, ClockDrift>) {
                const int i = net.index_of(e.node);
                detail::require(net.is_generator(i), "clock drift needs a generator node");
                model.drift(i) = hz_to_pu(e.offset_hz);
            } else {
                const auto idx = model.comm.edge_index(net.index_of(e.from), net.index_of(e.to));
                detail::require(idx.has_value(), "communication failure on a nonexistent edge");
                removed = *idx;
                model.comm = model.comm.without_edge(removed);
                model.gains = model.gains.without_flow(removed);
            }
        },
        event);
    return removed;
}

ClosedLoopModel apply_events(ClosedLoopModel model, std::vector<Event> events)
{
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return event_time(a) < event_time(b); });
    for (const auto& ev : events) apply_to_model(ev, model);
    return model;
}

namespace {

constexpr double kTimeEps = 1e-9;

struct RunContext {
    ClosedLoopModel model;
    std::vector<int> active_edges;
};

void apply_event(const Event& event, RunContext& ctx, ClosedLoopState& state)
{
    const int k = apply_to_model(event, ctx.model);
    if (k >= 0) {
        Vec flow(state.ctrl.flow.size() - 1);
        flow << state.ctrl.flow.head(k), state.ctrl.flow.tail(state.ctrl.flow.size() - k - 1);
        state.ctrl.flow = flow;
        ctx.active_edges.erase(ctx.active_edges.begin() + k);
    }
}

TrajectorySample make_sample(double t, const RunContext& ctx, const ClosedLoopState& state)
{
    TrajectorySample s;
    s.t = t;
    s.state = state;
    s.omega = state.plant.frequencies(ctx.model.params);
    s.p_load = ctx.model.p_load;
    s.drift = ctx.model.drift;
    s.active_edges = ctx.active_edges;
    s.hamiltonian = closed_loop_hamiltonian(ctx.model, state);
    s.balance_residual = balance_residual(ctx.model, state);
    s.algebraic_residual = algebraic_residual(ctx.model, state);
    return s;
}

// Empty string when the state is inside the validity domain.
std::string check_validity(const RunContext& ctx, const ClosedLoopState& state,
                           const IntegratorConfig& config)
{
    const Vec omega = state.plant.frequencies(ctx.model.params);
    const Vec voltage = state.plant.voltages();
    std::ostringstream msg;
    if (!differential_state(state).allFinite() || !omega.allFinite() || !voltage.allFinite()) {
        msg << "non-finite state";
    } else if (omega.cwiseAbs().maxCoeff() > config.max_frequency) {
        msg << "frequency deviation " << omega.cwiseAbs().maxCoeff() << " p.u. exceeds "
            << config.max_frequency;
    } else if (voltage.minCoeff() < config.min_voltage) {
        msg << "voltage " << voltage.minCoeff() << " p.u. below " << config.min_voltage;
    }
    return msg.str();
}

}  // namespace

Trajectory simulate(const SimulationSetup& setup)
{
    setup.config.validate();
    setup.model.validate();
    detail::require(setup.horizon > 0.0, "simulation horizon must be positive");
    const auto& config = setup.config;
    const double horizon = setup.horizon;

    for (const auto& ev : setup.events) {
        const double te = event_time(ev);
        const bool drift = std::holds_alternative<ClockDrift>(ev);
        detail::require(drift ? (te >= 0.0 && te < horizon) : (te > 0.0 && te < horizon),
                        "event time outside the simulation horizon: " + describe(ev));
    }

    std::vector<Event> events = setup.events;
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return event_time(a) < event_time(b); });

    // Breakpoints: output instants and event instants. Output instants are
    // k * interval; event instants replace output instants within kTimeEps.
    std::vector<double> breakpoints;
    const auto n_out = static_cast<long>(std::floor(horizon / config.output_interval + kTimeEps));
    for (long k = 0; k <= n_out; ++k) breakpoints.push_back(static_cast<double>(k) * config.output_interval);
    if (horizon - breakpoints.back() > kTimeEps) breakpoints.push_back(horizon);
    for (const auto& ev : events) breakpoints.push_back(event_time(ev));
    std::sort(breakpoints.begin(), breakpoints.end());
    std::vector<double> unique_points;
    for (double t : breakpoints) {
        if (unique_points.empty() || t - unique_points.back() > kTimeEps) {
            unique_points.push_back(t);
        } else if (std::any_of(events.begin(), events.end(),
                               [&](const Event& e) { return event_time(e) == t; })) {
            unique_points.back() = t;
        }
    }

    auto is_output = [&](double t) {
        const double k = std::round(t / config.output_interval);
        return std::abs(t - k * config.output_interval) <= kTimeEps || std::abs(t - horizon) <= kTimeEps;
    };

    RunContext ctx{setup.model, {}};
    for (int e = 0; e < setup.model.comm.num_edges(); ++e) ctx.active_edges.push_back(e);

    Trajectory traj;
    traj.comm_edges = setup.model.comm.edges();

    ClosedLoopState state = setup.initial;
    std::size_t next_event = 0;
    double t = 0.0;
    traj.mesh.push_back(0.0);

    auto fail = [&](const std::string& why) {
        traj.status = RunStatus::diverged;
        std::ostringstream msg;
        msg << "t = " << t << " s: " << why;
        traj.message = msg.str();
    };

    auto handle_breakpoint = [&](double tb) -> bool {
        bool fired = false;
        while (next_event < events.size() && std::abs(event_time(events[next_event]) - tb) <= kTimeEps) {
            EventRecord rec;
            rec.t = tb;
            rec.description = describe(events[next_event]);
            rec.p_load_before = ctx.model.p_load;
            apply_event(events[next_event], ctx, state);
            rec.p_load_after = ctx.model.p_load;
            traj.events.push_back(std::move(rec));
            ++next_event;
            fired = true;
        }
        try {
            if (fired) {
                make_consistent(ctx.model, state, config);
            }
            if (is_output(tb)) {
                traj.samples.push_back(make_sample(tb, ctx, state));
            }
        } catch (const std::runtime_error& err) {
            fail(err.what());
            return false;
        }
        return true;
    };

    try {
        make_consistent(ctx.model, state, config);
    } catch (const std::runtime_error& err) {
        fail(std::string("inconsistent initial state: ") + err.what());
        traj.final_model = ctx.model;
        return traj;
    }

    bool ok = handle_breakpoint(0.0);
    for (std::size_t b = 1; ok && b < unique_points.size(); ++b) {
        const double t0 = unique_points[b - 1];
        const double t1 = unique_points[b];
        const auto n_steps = std::max<long>(1, static_cast<long>(std::ceil((t1 - t0) / config.step - 1e-6)));
        const double h = (t1 - t0) / static_cast<double>(n_steps);
        for (long k = 1; k <= n_steps; ++k) {
            try {
                ClosedLoopState next = step(ctx.model, state, h, config);
                const std::string invalid = check_validity(ctx, next, config);
                t = k == n_steps ? t1 : t0 + static_cast<double>(k) * h;
                if (!invalid.empty()) {
                    fail(invalid);
                    ok = false;
                    break;
                }
                state = std::move(next);
            } catch (const std::runtime_error& err) {
                fail(err.what());
                ok = false;
                break;
            }
            traj.mesh.push_back(t);
        }
        if (ok) {
            ok = handle_breakpoint(t1);
        }
    }

    traj.end_time = t;
    traj.final_model = ctx.model;
    return traj;
}

ClosedLoopModel model_at(const ClosedLoopModel& initial, const Trajectory& trajectory,
                         const TrajectorySample& sample)
{
    ClosedLoopModel m = initial;
    m.p_load = sample.p_load;
    m.drift = sample.drift;
    if (static_cast<int>(sample.active_edges.size()) != initial.comm.num_edges()) {
        std::vector<std::pair<int, int>> edges;
        Vec tau(static_cast<Eigen::Index>(sample.active_edges.size()));
        for (std::size_t k = 0; k < sample.active_edges.size(); ++k) {
            const int e = sample.active_edges[k];
            edges.push_back(trajectory.comm_edges[static_cast<std::size_t>(e)]);
            tau(static_cast<Eigen::Index>(k)) = initial.gains.tau_flow(e);
        }
        m.comm = CommGraph::from_edges(initial.network.num_nodes(), std::move(edges), true);
        m.gains.tau_flow = tau;
    }
    return m;
}

}  // namespace pricegrid

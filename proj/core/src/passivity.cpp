#include "pricegrid/passivity.hpp"

#include "pricegrid/equilibrium.hpp"
#include "pricegrid/power_flow.hpp"

#include <cmath>
#include <limits>

namespace pricegrid {

BlockLayout BlockLayout::of(const ClosedLoopModel& model)
{
    BlockLayout l;
    l.ng = model.network.num_generators();
    l.n = model.network.num_nodes();
    l.nl = model.network.num_loads();
    l.m = model.network.num_lines();
    l.mc = model.comm.num_edges();
    return l;
}

Vec pack_scaled(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const BlockLayout l = BlockLayout::of(model);
    Vec x(l.size());
    x << state.ctrl.p_gen.cwiseProduct(model.gains.tau_gen),
        state.ctrl.price.cwiseProduct(model.gains.tau_price),
        state.ctrl.flow.cwiseProduct(model.gains.tau_flow), state.plant.pack();
    return x;
}

ClosedLoopState unpack_scaled(const ClosedLoopModel& model, const Vec& x)
{
    const BlockLayout l = BlockLayout::of(model);
    detail::require(x.size() == l.size(), "closed-loop vector has wrong size");
    ClosedLoopState s;
    s.ctrl.p_gen = x.segment(l.p_gen(), l.ng).cwiseQuotient(model.gains.tau_gen);
    s.ctrl.price = x.segment(l.price(), l.n).cwiseQuotient(model.gains.tau_price);
    s.ctrl.flow = x.segment(l.flow(), l.mc).cwiseQuotient(model.gains.tau_flow);
    s.plant = PlantState::unpack(x.tail(l.size() - l.theta()), model.network);
    return s;
}

Vec closed_loop_input(const ClosedLoopModel& model)
{
    const BlockLayout l = BlockLayout::of(model);
    Vec u(l.input_size());
    u << model.excitation, model.q_load, model.p_load, model.drift;
    return u;
}

Vec closed_loop_gradient(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const BlockLayout l = BlockLayout::of(model);
    Vec z(l.size());
    z << state.ctrl.p_gen, state.ctrl.price, state.ctrl.flow,
        plant_gradient(state.plant, model.network, model.params).pack();
    return z;
}

ClosedLoopBlocks assemble_blocks(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const BlockLayout l = BlockLayout::of(model);
    const int nc = l.theta();
    const int np = l.size() - nc;
    const PlantStructure ps = assemble_plant_structure(state.plant, model.network, model.params);

    ClosedLoopBlocks b;
    b.layout = l;
    b.e = Vec::Ones(l.size());
    b.e.tail(2 * l.nl).setZero();

    b.j = Mat::Zero(l.size(), l.size());
    b.j.topLeftCorner(nc, nc) = controller_interconnection(model.comm, l.ng);
    b.j.bottomRightCorner(np, np) = ps.interconnection;
    // u_c = -omega_g and the plant's p_g port close the loop.
    b.j.block(l.p_gen(), l.momentum(), l.ng, l.ng) = -Mat::Identity(l.ng, l.ng);
    b.j.block(l.momentum(), l.p_gen(), l.ng, l.ng) = Mat::Identity(l.ng, l.ng);

    b.r = Mat::Zero(l.size(), l.size());
    b.r.bottomRightCorner(np, np) = ps.damping;

    b.dissipation = Vec::Zero(l.size());
    b.dissipation.segment(l.p_gen(), l.ng) = model.cost.gradient(state.ctrl.p_gen);
    if (model.mode == ControllerMode::lossy) {
        b.dissipation.segment(l.price(), l.n) =
            -conductance_terms(state.plant.theta, state.plant.voltages(), model.network, model.params.gen)
                 .phi;
    }
    b.dissipation.tail(np) = ps.dissipation;

    b.f = Mat::Zero(l.size(), l.input_size());
    b.f.block(l.price(), l.in_p_load(), l.n, l.n).setIdentity();
    b.f.block(l.momentum(), l.in_p_load(), l.ng, l.ng) = -Mat::Identity(l.ng, l.ng);
    b.f.block(l.gen_voltage(), l.in_excitation(), l.ng, l.ng) =
        model.params.gen.tau_u.cwiseInverse().asDiagonal();
    b.f.block(l.load_freq(), l.in_p_load() + l.ng, l.nl, l.nl) = -Mat::Identity(l.nl, l.nl);
    b.f.block(l.load_voltage(), l.in_q_load(), l.nl, l.nl) = -Mat::Identity(l.nl, l.nl);
    b.f.block(l.p_gen(), l.in_drift(), l.ng, l.ng) = -Mat::Identity(l.ng, l.ng);
    return b;
}

Vec block_rhs(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const ClosedLoopBlocks b = assemble_blocks(model, state);
    const Vec z = closed_loop_gradient(model, state);
    return (b.j - b.r) * z - b.dissipation + b.f * closed_loop_input(model);
}

Vec composed_rhs(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const BlockLayout l = BlockLayout::of(model);
    const PlantResiduals pr =
        plant_residuals(state.plant, model.plant_input(state.ctrl.p_gen), model.network, model.params);
    const Vec phi =
        conductance_terms(state.plant.theta, state.plant.voltages(), model.network, model.params.gen).phi;
    const Vec omega_gen = state.plant.momentum.cwiseQuotient(model.params.gen.inertia);
    const ControllerState dc = controller_rhs(state.ctrl, omega_gen + model.drift, model.p_load, phi,
                                              model.comm, model.gains, model.cost, model.mode);
    Vec out(l.size());
    out << dc.p_gen.cwiseProduct(model.gains.tau_gen), dc.price.cwiseProduct(model.gains.tau_price),
        dc.flow.cwiseProduct(model.gains.tau_flow), pr.pack();
    return out;
}

Vec dissipation_map(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const ClosedLoopBlocks b = assemble_blocks(model, state);
    return b.r * closed_loop_gradient(model, state) + b.dissipation;
}

double shifted_hamiltonian(const ClosedLoopModel& model, const ClosedLoopState& state,
                           const ClosedLoopState& reference)
{
    const Vec dx = pack_scaled(model, state) - pack_scaled(model, reference);
    return closed_loop_hamiltonian(model, state) - dx.dot(closed_loop_gradient(model, reference)) -
           closed_loop_hamiltonian(model, reference);
}

double dissipation_gap(const ClosedLoopModel& model, const ClosedLoopState& state,
                       const ClosedLoopState& reference)
{
    const Vec dz = closed_loop_gradient(model, state) - closed_loop_gradient(model, reference);
    return dz.dot(dissipation_map(model, state) - dissipation_map(model, reference));
}

double shifted_supply(const ClosedLoopModel& model, const ClosedLoopState& state,
                      const ClosedLoopState& reference, const Vec& reference_input)
{
    const ClosedLoopBlocks b = assemble_blocks(model, state);
    const Vec dz = closed_loop_gradient(model, state) - closed_loop_gradient(model, reference);
    return dz.dot(b.f * (closed_loop_input(model) - reference_input));
}

std::vector<DissipationSample> dissipation_trace(const Trajectory& trajectory,
                                                 const ClosedLoopModel& initial,
                                                 const ClosedLoopModel& reference_model,
                                                 const ClosedLoopState& reference)
{
    const auto& samples = trajectory.samples;
    const std::size_t count = samples.size();
    std::vector<DissipationSample> out(count);
    std::vector<ClosedLoopModel> models;
    std::vector<ClosedLoopState> refs;
    models.reserve(count);
    refs.reserve(count);

    const Vec ubar = closed_loop_input(reference_model);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t k = 0; k < count; ++k) {
        const auto& s = samples[k];
        models.push_back(model_at(initial, trajectory, s));
        const auto& model = models.back();
        if (k > 0 && samples[k - 1].active_edges == s.active_edges) {
            refs.push_back(refs.back());
        } else {
            refs.push_back(reference_for(reference_model, model.comm, reference));
        }
        const auto& ref = refs.back();

        DissipationSample d;
        d.t = s.t;
        d.hamiltonian = s.hamiltonian;
        d.shifted = shifted_hamiltonian(model, s.state, ref);
        d.gap = dissipation_gap(model, s.state, ref);
        d.supply = shifted_supply(model, s.state, ref, ubar);
        d.dshifted_dt = nan;
        d.predicted_rate = nan;
        d.status = d.gap >= -kGapTolerance ? "dissipative" : "non-dissipative";
        out[k] = d;
    }

    auto same_inputs = [&](std::size_t a, std::size_t b) {
        return samples[a].p_load == samples[b].p_load && samples[a].drift == samples[b].drift &&
               samples[a].active_edges == samples[b].active_edges;
    };
    for (std::size_t k = 1; k + 1 < count; ++k) {
        if (!same_inputs(k - 1, k) || !same_inputs(k, k + 1)) continue;
        const double dt = samples[k + 1].t - samples[k - 1].t;
        out[k].dshifted_dt = (out[k + 1].shifted - out[k - 1].shifted) / dt;

        const BlockLayout l = BlockLayout::of(models[k]);
        const Vec dz = closed_loop_gradient(models[k], samples[k].state) -
                       closed_loop_gradient(models[k], refs[k]);
        const Vec x_next = pack_scaled(models[k], samples[k + 1].state);
        const Vec x_prev = pack_scaled(models[k], samples[k - 1].state);
        const int na = 2 * l.nl;
        const Vec xdot_alg = (x_next.tail(na) - x_prev.tail(na)) / dt;
        out[k].predicted_rate = -out[k].gap + out[k].supply + dz.tail(na).dot(xdot_alg);
    }
    return out;
}

}  // namespace pricegrid

#include "pricegrid/closed_loop.hpp"

#include "pricegrid/power_flow.hpp"

namespace pricegrid {

PlantInput ClosedLoopModel::plant_input(const Vec& p_gen) const
{
    return {p_gen, excitation, q_load, p_load};
}

void ClosedLoopModel::validate() const
{
    const int n = network.num_nodes();
    const int ng = network.num_generators();
    const int nl = network.num_loads();
    detail::require(comm.num_nodes() == n, "communication graph does not match the network");
    detail::require(cost.num_generators() == ng, "cost function does not match the generators");
    gains.validate(ng, n, comm.num_edges());
    detail::require(excitation.size() == ng, "excitation needs one entry per generator");
    detail::require((excitation.array() > 0.0).all(), "excitation voltages must be positive");
    detail::require(q_load.size() == nl, "reactive demand needs one entry per load");
    detail::require(p_load.size() == n, "active demand needs one entry per node");
    detail::require(drift.size() == ng, "drift needs one entry per generator");
    detail::require(params.gen.inertia.size() == ng && params.load.damping.size() == nl,
                    "plant parameters do not match the network");
}

double closed_loop_hamiltonian(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const auto& c = state.ctrl;
    const auto& g = model.gains;
    const double hc = 0.5 * (g.tau_gen.dot(c.p_gen.cwiseAbs2()) + g.tau_price.dot(c.price.cwiseAbs2()) +
                             g.tau_flow.dot(c.flow.cwiseAbs2()));
    return plant_hamiltonian(state.plant, model.network, model.params) + hc;
}

double balance_residual(const ClosedLoopModel& model, const ClosedLoopState& state)
{
    const double surplus = state.ctrl.p_gen.sum() - model.p_load.sum();
    return surplus - transmission_losses(state.plant.theta, state.plant.voltages(), model.network);
}

}  // namespace pricegrid

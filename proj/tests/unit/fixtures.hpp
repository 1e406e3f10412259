#pragma once

#include "pricegrid/harness.hpp"

#include <random>

namespace pgtest {

using namespace pricegrid;

inline NodeSpec generator_node(int id, double b_shunt = 0.0)
{
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::generator;
    n.damping = 1.6;
    n.shunt_susceptance = b_shunt;
    n.inertia = 5.2;
    n.xd = 0.02;
    n.xd_prime = 0.004;
    n.tau_u = 6.45;
    return n;
}

inline NodeSpec load_node(int id, double b_shunt = 0.0)
{
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::load;
    n.damping = 1.3;
    n.shunt_susceptance = b_shunt;
    return n;
}

/// Generator 1 and load 2 joined by one line.
inline GridSpec two_bus(double b = 1.0, double b_shunt = 0.0)
{
    GridSpec g;
    g.nodes = {generator_node(1, b_shunt), load_node(2, b_shunt)};
    g.lines = {{1, 2, b}};
    return g;
}

struct Paper {
    GridSpec grid = paper_grid();
    Network net;
    PlantParams params;

    explicit Paper(double eta = 1.0)
        : net(build_network(grid, eta)), params(extract_params(grid, net))
    {
    }
};

/// Plant state with edge angles derived from nodal angles.
inline PlantState random_plant_state(const Network& net, const PlantParams& params, std::mt19937& rng)
{
    std::uniform_real_distribution<double> angle(-0.3, 0.3);
    std::uniform_real_distribution<double> freq(-0.01, 0.01);
    std::uniform_real_distribution<double> volt(0.85, 1.15);
    Vec nodal(net.num_nodes());
    for (int i = 0; i < nodal.size(); ++i) nodal[i] = angle(rng);
    PlantState x = PlantState::zeros(net);
    x.theta = net.incidence().transpose() * nodal;
    for (int i = 0; i < net.num_generators(); ++i) {
        x.momentum[i] = params.gen.inertia[i] * freq(rng);
        x.gen_voltage[i] = volt(rng);
    }
    for (int i = 0; i < net.num_loads(); ++i) {
        x.load_freq[i] = freq(rng);
        x.load_voltage[i] = volt(rng);
    }
    return x;
}

inline ControllerState random_controller_state(int ng, int n, int mc, std::mt19937& rng)
{
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    ControllerState c;
    c.p_gen = Vec::NullaryExpr(ng, [&] { return d(rng); });
    c.price = Vec::NullaryExpr(n, [&] { return d(rng); });
    c.flow = Vec::NullaryExpr(mc, [&] { return d(rng); });
    return c;
}

/// Paper case at its pre-fault steady state.
inline const PreparedRun& paper_run()
{
    static const PreparedRun prep = prepare(builtin_paper_case());
    return prep;
}

}  // namespace pgtest

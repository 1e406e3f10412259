#include "pricegrid/plant.hpp"

#include <cmath>
#include <sstream>

namespace pricegrid {

PlantState PlantState::zeros(const Network& network)
{
    PlantState x;
    x.theta = Vec::Zero(network.num_lines());
    x.momentum = Vec::Zero(network.num_generators());
    x.gen_voltage = Vec::Zero(network.num_generators());
    x.load_freq = Vec::Zero(network.num_loads());
    x.load_voltage = Vec::Zero(network.num_loads());
    return x;
}

Vec PlantState::voltages() const
{
    Vec u(gen_voltage.size() + load_voltage.size());
    u << gen_voltage, load_voltage;
    return u;
}

Vec PlantState::frequencies(const PlantParams& params) const
{
    Vec w(momentum.size() + load_freq.size());
    w << momentum.cwiseQuotient(params.gen.inertia), load_freq;
    return w;
}

int PlantState::size() const
{
    return static_cast<int>(theta.size() + momentum.size() + gen_voltage.size() + load_freq.size() +
                            load_voltage.size());
}

Vec PlantState::pack() const
{
    Vec x(size());
    x << theta, momentum, gen_voltage, load_freq, load_voltage;
    return x;
}

PlantState PlantState::unpack(const Vec& x, const Network& network)
{
    const int m = network.num_lines();
    const int ng = network.num_generators();
    const int nl = network.num_loads();
    detail::require(x.size() == m + 2 * ng + 2 * nl, "plant state vector has wrong size");
    PlantState s;
    s.theta = x.segment(0, m);
    s.momentum = x.segment(m, ng);
    s.gen_voltage = x.segment(m + ng, ng);
    s.load_freq = x.segment(m + 2 * ng, nl);
    s.load_voltage = x.segment(m + 2 * ng + nl, nl);
    return s;
}

int PlantInput::size() const
{
    return static_cast<int>(p_gen.size() + excitation.size() + q_load.size() + p_load.size());
}

Vec PlantInput::pack() const
{
    Vec u(size());
    u << p_gen, excitation, q_load, p_load;
    return u;
}

Vec PlantResiduals::pack() const
{
    Vec r(theta_dot.size() + momentum_dot.size() + voltage_dot.size() + freq_residual.size() +
          voltage_residual.size());
    r << theta_dot, momentum_dot, voltage_dot, freq_residual, voltage_residual;
    return r;
}

double plant_hamiltonian(const PlantState& x, const Network& network, const PlantParams& params)
{
    const auto& gen = params.gen;
    const Vec u = x.voltages();
    double h = 0.5 * (x.momentum.cwiseAbs2().cwiseQuotient(gen.inertia).sum() +
                      x.gen_voltage.cwiseAbs2().cwiseQuotient(gen.reactance_gap()).sum());
    h -= 0.5 * network.shunt_susceptance().dot(u.cwiseAbs2());
    for (int e = 0; e < network.num_lines(); ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        h -= line.b * u(line.from) * u(line.to) * std::cos(x.theta(e));
    }
    h += 0.5 * x.load_freq.squaredNorm();
    return h;
}

PlantState plant_gradient(const PlantState& x, const Network& network, const PlantParams& params)
{
    const int ng = network.num_generators();
    const Vec u = x.voltages();

    PlantState z;
    z.theta = Vec::Zero(network.num_lines());
    z.momentum = x.momentum.cwiseQuotient(params.gen.inertia);
    z.load_freq = x.load_freq;

    Vec dv = -network.shunt_susceptance().cwiseProduct(u);
    for (int e = 0; e < network.num_lines(); ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        const double c = std::cos(x.theta(e));
        z.theta(e) = line.b * u(line.from) * u(line.to) * std::sin(x.theta(e));
        dv(line.from) -= line.b * u(line.to) * c;
        dv(line.to) -= line.b * u(line.from) * c;
    }
    dv.head(ng) += x.gen_voltage.cwiseQuotient(params.gen.reactance_gap());
    z.gen_voltage = dv.head(ng);
    z.load_voltage = dv.tail(network.num_loads());
    return z;
}

PlantResiduals plant_residuals(const PlantState& x, const PlantInput& u, const Network& network,
                               const PlantParams& params)
{
    const int ng = network.num_generators();
    const int nl = network.num_loads();
    for (int i = 0; i < ng; ++i) {
        if (!(x.gen_voltage(i) > 0.0)) {
            std::ostringstream msg;
            msg << "generator voltage at node " << network.id_of(i) << " is " << x.gen_voltage(i);
            throw SingularStateError(msg.str());
        }
    }

    const auto& gen = params.gen;
    const PowerFlows flows = power_flows(x.theta, x.voltages(), network);
    const Vec omega = x.frequencies(params);
    const Vec omega_gen = omega.head(ng);

    PlantResiduals r;
    r.theta_dot = network.incidence().transpose() * omega;
    r.momentum_dot = -gen.damping.cwiseProduct(omega_gen) + u.p_gen - u.p_load.head(ng) -
                     flows.p.head(ng);
    r.voltage_dot = (u.excitation - x.gen_voltage -
                     gen.reactance_gap().cwiseProduct(flows.q.head(ng).cwiseQuotient(x.gen_voltage)))
                        .cwiseQuotient(gen.tau_u);
    r.freq_residual = -params.load.damping.cwiseProduct(x.load_freq) - u.p_load.tail(nl) -
                      flows.p.tail(nl);
    r.voltage_residual = -u.q_load - flows.q.tail(nl);
    return r;
}

PlantStructure assemble_plant_structure(const PlantState& x, const Network& network,
                                        const PlantParams& params)
{
    const int m = network.num_lines();
    const int ng = network.num_generators();
    const int nl = network.num_loads();
    const int n = ng + nl;
    const int dim = m + 2 * ng + 2 * nl;

    // Block offsets in the (theta, L, U_g, omega_l, U_l) layout.
    const int o_l = m;
    const int o_ug = m + ng;
    const int o_wl = m + 2 * ng;
    const int o_ul = m + 2 * ng + nl;

    PlantStructure s;
    s.interconnection = Mat::Zero(dim, dim);
    const Mat dpg = network.generator_incidence();
    const Mat dpl = network.load_incidence();
    s.interconnection.block(0, o_l, m, ng) = dpg.transpose();
    s.interconnection.block(0, o_wl, m, nl) = dpl.transpose();
    s.interconnection.block(o_l, 0, ng, m) = -dpg;
    s.interconnection.block(o_wl, 0, nl, m) = -dpl;

    Vec diag = Vec::Zero(dim);
    diag.segment(o_l, ng) = params.gen.damping;
    diag.segment(o_ug, ng) = params.gen.voltage_damping();
    diag.segment(o_wl, nl) = params.load.damping;
    diag.segment(o_ul, nl) = x.load_voltage;
    s.damping = diag.asDiagonal();

    const ConductanceTerms terms = conductance_terms(x.theta, x.voltages(), network, params.gen);
    s.dissipation = Vec::Zero(dim);
    s.dissipation.segment(o_l, ng) = terms.phi.head(ng);
    s.dissipation.segment(o_ug, ng) = terms.rho_gen;
    s.dissipation.segment(o_wl, nl) = terms.phi.tail(nl);
    s.dissipation.segment(o_ul, nl) = terms.rho_load;

    // Input columns: p_g (ng), U_f (ng), q_l (nl), p_l (n).
    const int in_pg = 0;
    const int in_uf = ng;
    const int in_ql = 2 * ng;
    const int in_pl = 2 * ng + nl;
    s.input = Mat::Zero(dim, 2 * ng + nl + n);
    s.input.block(o_l, in_pg, ng, ng) = Mat::Identity(ng, ng);
    s.input.block(o_l, in_pl, ng, ng) = -Mat::Identity(ng, ng);
    s.input.block(o_ug, in_uf, ng, ng) = params.gen.tau_u.cwiseInverse().asDiagonal();
    s.input.block(o_wl, in_pl + ng, nl, nl) = -Mat::Identity(nl, nl);
    s.input.block(o_ul, in_ql, nl, nl) = -Mat::Identity(nl, nl);
    return s;
}

Vec plant_rhs_port_hamiltonian(const PlantState& x, const PlantInput& u, const Network& network,
                               const PlantParams& params)
{
    const PlantStructure s = assemble_plant_structure(x, network, params);
    const Vec z = plant_gradient(x, network, params).pack();
    return (s.interconnection - s.damping) * z - s.dissipation + s.input * u.pack();
}

}  // namespace pricegrid

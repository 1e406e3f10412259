#include "pricegrid/power_flow.hpp"

#include <cmath>

namespace pricegrid {

namespace {

void check_sizes(const Vec& theta_diff, const Vec& voltage, const Network& network)
{
    detail::require(theta_diff.size() == network.num_lines(), "edge angle vector has wrong size");
    detail::require(voltage.size() == network.num_nodes(), "voltage vector has wrong size");
}

}  // namespace

PowerFlows power_flows(const Vec& theta_diff, const Vec& voltage, const Network& network)
{
    check_sizes(theta_diff, voltage, network);
    const Vec& u = voltage;
    PowerFlows flows;
    flows.p = network.shunt_conductance().cwiseProduct(u.cwiseAbs2());
    flows.q = -network.shunt_susceptance().cwiseProduct(u.cwiseAbs2());

    for (int e = 0; e < network.num_lines(); ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        const int i = line.from;
        const int j = line.to;
        const double uu = u(i) * u(j);
        const double s = std::sin(theta_diff(e));
        const double c = std::cos(theta_diff(e));
        // theta_ji = -theta_ij flips the sine terms at the receiving end.
        flows.p(i) += line.b * uu * s + line.g * uu * c;
        flows.p(j) += -line.b * uu * s + line.g * uu * c;
        flows.q(i) += -line.b * uu * c + line.g * uu * s;
        flows.q(j) += -line.b * uu * c - line.g * uu * s;
    }
    return flows;
}

ConductanceTerms conductance_terms(const Vec& theta_diff, const Vec& voltage, const Network& network,
                                   const GeneratorParams& gen)
{
    check_sizes(theta_diff, voltage, network);
    const int n = network.num_nodes();
    const int ng = network.num_generators();
    const Vec& u = voltage;

    ConductanceTerms terms;
    terms.phi = network.shunt_conductance().cwiseProduct(u.cwiseAbs2());
    Vec sine_part = Vec::Zero(n);
    for (int e = 0; e < network.num_lines(); ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        const double uu = u(line.from) * u(line.to);
        const double gc = line.g * uu * std::cos(theta_diff(e));
        const double gs = line.g * uu * std::sin(theta_diff(e));
        terms.phi(line.from) += gc;
        terms.phi(line.to) += gc;
        sine_part(line.from) += gs;
        sine_part(line.to) -= gs;
    }
    terms.rho_load = sine_part.tail(n - ng);
    terms.rho_gen = gen.voltage_damping().cwiseProduct(sine_part.head(ng).cwiseQuotient(u.head(ng)));
    return terms;
}

PowerFlowJacobian power_flow_jacobian(const Vec& theta_diff, const Vec& voltage,
                                      const Network& network)
{
    check_sizes(theta_diff, voltage, network);
    const int n = network.num_nodes();
    const int m = network.num_lines();
    const Vec& u = voltage;

    PowerFlowJacobian jac;
    jac.dp_dtheta = Mat::Zero(n, m);
    jac.dq_dtheta = Mat::Zero(n, m);
    jac.dp_dvoltage = Mat::Zero(n, n);
    jac.dq_dvoltage = Mat::Zero(n, n);

    for (int i = 0; i < n; ++i) {
        jac.dp_dvoltage(i, i) = 2.0 * network.shunt_conductance()(i) * u(i);
        jac.dq_dvoltage(i, i) = -2.0 * network.shunt_susceptance()(i) * u(i);
    }

    for (int e = 0; e < m; ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        const int i = line.from;
        const int j = line.to;
        const double s = std::sin(theta_diff(e));
        const double c = std::cos(theta_diff(e));
        const double b = line.b;
        const double g = line.g;
        const double uu = u(i) * u(j);

        jac.dp_dtheta(i, e) = uu * (b * c - g * s);
        jac.dp_dtheta(j, e) = uu * (-b * c - g * s);
        jac.dq_dtheta(i, e) = uu * (b * s + g * c);
        jac.dq_dtheta(j, e) = uu * (b * s - g * c);

        // Each flow term is bilinear in (U_i, U_j).
        const double p_i = b * s + g * c;
        const double p_j = -b * s + g * c;
        const double q_i = -b * c + g * s;
        const double q_j = -b * c - g * s;
        jac.dp_dvoltage(i, i) += p_i * u(j);
        jac.dp_dvoltage(i, j) += p_i * u(i);
        jac.dp_dvoltage(j, j) += p_j * u(i);
        jac.dp_dvoltage(j, i) += p_j * u(j);
        jac.dq_dvoltage(i, i) += q_i * u(j);
        jac.dq_dvoltage(i, j) += q_i * u(i);
        jac.dq_dvoltage(j, j) += q_j * u(i);
        jac.dq_dvoltage(j, i) += q_j * u(j);
    }
    return jac;
}

double transmission_losses(const Vec& theta_diff, const Vec& voltage, const Network& network)
{
    check_sizes(theta_diff, voltage, network);
    double loss = network.shunt_conductance().dot(voltage.cwiseAbs2());
    for (int e = 0; e < network.num_lines(); ++e) {
        const auto& line = network.lines()[static_cast<std::size_t>(e)];
        loss += 2.0 * line.g * voltage(line.from) * voltage(line.to) * std::cos(theta_diff(e));
    }
    return loss;
}

}  // namespace pricegrid

#pragma once

#include "pricegrid/common.hpp"
#include "pricegrid/network.hpp"

namespace pricegrid {

/// Sending-end nodal power flows of the lossy AC network.
struct PowerFlows {
    Vec p;  // active, per node
    Vec q;  // reactive, per node
};

/// Conductance (loss) parts of the nodal flows.
///
/// `phi` is the cosine/conductance part of the active flow at every node.
/// `rho_load` is the sine/conductance part of the reactive flow at load nodes;
/// `rho_gen` is the same quantity divided by U_i and scaled by R_g,i, i.e. the
/// term it contributes to the generator voltage dynamics.
struct ConductanceTerms {
    Vec phi;
    Vec rho_gen;
    Vec rho_load;

    auto phi_gen(int num_generators) const { return phi.head(num_generators); }
    auto phi_load(int num_generators) const { return phi.tail(phi.size() - num_generators); }
};

/// Partial derivatives of the nodal flows with respect to the edge angle
/// differences and the nodal voltage magnitudes.
struct PowerFlowJacobian {
    Mat dp_dtheta;  // n x m
    Mat dq_dtheta;  // n x m
    Mat dp_dvoltage;  // n x n
    Mat dq_dvoltage;  // n x n
};

/// p_i = sum_j B_ij U_i U_j sin(theta_ij) + G_ii U_i^2 + sum_j G_ij U_i U_j cos(theta_ij)
/// q_i = -B_ii U_i^2 - sum_j B_ij U_i U_j cos(theta_ij) + sum_j G_ij U_i U_j sin(theta_ij)
///
/// `theta_diff` is indexed by physical line in the network's orientation,
/// `voltage` by internal node index.
PowerFlows power_flows(const Vec& theta_diff, const Vec& voltage, const Network& network);

ConductanceTerms conductance_terms(const Vec& theta_diff, const Vec& voltage, const Network& network,
                                   const GeneratorParams& gen);

PowerFlowJacobian power_flow_jacobian(const Vec& theta_diff, const Vec& voltage,
                                      const Network& network);

/// Total active losses sum_i G_ii U_i^2 + 2 sum_lines G_ij U_i U_j cos(theta_ij).
double transmission_losses(const Vec& theta_diff, const Vec& voltage, const Network& network);

}  // namespace pricegrid

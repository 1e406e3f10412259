#pragma once

#include "pricegrid/common.hpp"
#include "pricegrid/network.hpp"
#include "pricegrid/power_flow.hpp"

namespace pricegrid {

/// Plant state x_p = (theta, L, U_g, omega_l, U_l).
///
/// The same layout doubles as the co-state dH_p/dx_p returned by
/// plant_gradient.
struct PlantState {
    Vec theta;         // per physical line, rad
    Vec momentum;      // per generator, deviation from M_i * omega_n
    Vec gen_voltage;   // per generator
    Vec load_freq;     // per load, p.u. deviation
    Vec load_voltage;  // per load

    static PlantState zeros(const Network& network);

    /// (U_g, U_l) stacked in internal node order.
    Vec voltages() const;
    /// (L / M, omega_l) stacked in internal node order.
    Vec frequencies(const PlantParams& params) const;

    int size() const;
    Vec pack() const;
    static PlantState unpack(const Vec& x, const Network& network);
};

/// Plant input u_p = (p_g, U_f, q_l, p_l).
struct PlantInput {
    Vec p_gen;       // per generator
    Vec excitation;  // per generator, U_f
    Vec q_load;      // per load
    Vec p_load;      // per node (generator nodes may carry local demand too)

    int size() const;
    Vec pack() const;
};

/// Right-hand side of the plant DAE in scalar form.
struct PlantResiduals {
    Vec theta_dot;
    Vec momentum_dot;
    Vec voltage_dot;
    Vec freq_residual;     // 0 = -A omega_l - p_l - p_i at load nodes
    Vec voltage_residual;  // 0 = -q_l - q_i at load nodes

    Vec pack() const;
};

/// Stored energy: rotor and field energy, line magnetic energy with shunts,
/// plus half the squared load frequency deviations.
double plant_hamiltonian(const PlantState& x, const Network& network, const PlantParams& params);

/// Analytic gradient of plant_hamiltonian in the PlantState layout.
PlantState plant_gradient(const PlantState& x, const Network& network, const PlantParams& params);

/// Scalar-form plant equations. Throws SingularStateError when a generator
/// voltage is not strictly positive.
PlantResiduals plant_residuals(const PlantState& x, const PlantInput& u, const Network& network,
                               const PlantParams& params);

/// Matrix form E x' = (J_p - R_p) grad H_p - r_p + F_p u_p of the plant.
struct PlantStructure {
    Mat interconnection;  // J_p, constant, skew-symmetric
    Mat damping;          // R_p, diagonal, depends on U_l
    Vec dissipation;      // r_p, conductance terms
    Mat input;            // F_p
};

PlantStructure assemble_plant_structure(const PlantState& x, const Network& network,
                                        const PlantParams& params);

/// Evaluates the matrix form; the result stacks the differential derivatives
/// followed by the algebraic residuals, in the PlantState::pack layout.
Vec plant_rhs_port_hamiltonian(const PlantState& x, const PlantInput& u, const Network& network,
                               const PlantParams& params);

}  // namespace pricegrid

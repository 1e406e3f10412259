#pragma once

#include "pricegrid/closed_loop.hpp"

#include <optional>
#include <ostream>

namespace pricegrid {

/// Steady-state problem of the closed loop.
///
/// Without `excitation` the generator voltages are pinned to
/// `target_voltage` and U_f becomes an unknown.
struct EquilibriumProblem {
    Network network;
    PlantParams params;
    CostFunction cost;
    CommGraph comm;
    ControllerMode mode = ControllerMode::lossy;

    Vec p_load;  // per node
    Vec q_load;  // per load
    Vec drift;   // per generator, p.u.; empty means zero
    std::optional<Vec> excitation;
    double target_voltage = 1.0;

    int reference_node = 0;  // internal index whose angle is pinned to 0
    double tol = 1e-10;
    int max_iterations = 50;

    /// Loads, drift, excitation and controller data of `model`.
    static EquilibriumProblem from_model(const ClosedLoopModel& model);
};

struct EquilibriumSolution {
    ClosedLoopState state;
    Vec angles;              // nodal angles, reference node at 0
    Vec excitation;          // U_f
    double price = 0.0;      // common lambda
    double sync_freq = 0.0;  // synchronous frequency deviation, p.u.
    double surplus = 0.0;    // sum p_g - sum p_l
    double losses = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/// Damped Newton solve of the steady-state equations from a flat start
/// (U = 1, angles 0, injections shared in proportion to the cost weights).
///
/// Unknowns: nodal angles except the reference, voltages (or U_f), p_g, the
/// common price and the synchronous frequency. The virtual flows are the
/// minimum-norm solution of the balance equation. Throws InfeasibleError
/// when Newton fails.
EquilibriumSolution solve_equilibrium(const EquilibriumProblem& problem);

/// U_f that puts every generator voltage at `target` in steady state.
Vec calibrate_excitation(EquilibriumProblem problem, double target = 1.0);

struct PowerBalance {
    double surplus = 0.0;   // sum p_g - sum p_l
    double loss = 0.0;      // sum G_ii U_i^2 + 2 sum_lines G_ij U_i U_j cos(theta_ij)
    double residual = 0.0;  // surplus - loss
};

PowerBalance power_balance(const Vec& p_gen, const Vec& p_load, const Vec& theta_diff,
                           const Vec& voltage, const Network& network);

/// Minimum-norm nu with D_c nu = I_g^T p_g - p_l - phi (least squares when
/// the right-hand side has a component outside the range of D_c).
Vec min_norm_flows(const CommGraph& comm, const Vec& p_gen, const Vec& p_load, const Vec& phi);

/// Copy of the steady state `reference` of `reference_model` with the
/// virtual flows recomputed for the communication graph `comm`.
ClosedLoopState reference_for(const ClosedLoopModel& reference_model, const CommGraph& comm,
                              const ClosedLoopState& reference);

/// One CSV row per node (id, kind, U, angle, p_g, lambda, p_l, U_f) followed
/// by a block of scalar summary lines.
void write_equilibrium_report(std::ostream& out, const EquilibriumSolution& solution,
                              const EquilibriumProblem& problem);

}  // namespace pricegrid

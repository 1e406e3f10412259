#pragma once

#include "pricegrid/controller.hpp"
#include "pricegrid/network.hpp"
#include "pricegrid/plant.hpp"

namespace pricegrid {

/// Plant plus controller state; dimensions follow one Network and CommGraph.
struct ClosedLoopState {
    PlantState plant;
    ControllerState ctrl;
};

/// The closed loop at one instant: model data plus the current exogenous
/// inputs. Events mutate a copy of this.
struct ClosedLoopModel {
    Network network;
    PlantParams params;
    CommGraph comm;
    ControllerGains gains;
    CostFunction cost;
    ControllerMode mode = ControllerMode::lossy;

    Vec excitation;  // U_f per generator
    Vec q_load;      // per load
    Vec p_load;      // per node
    Vec drift;       // measurement offset per generator, p.u.

    PlantInput plant_input(const Vec& p_gen) const;
    /// Checks dimensions and parameter signs; throws ModelError.
    void validate() const;
};

/// H = H_p(x_p) + 1/2 sum tau p_g^2 + 1/2 sum tau lambda^2 + 1/2 sum tau nu^2.
double closed_loop_hamiltonian(const ClosedLoopModel& model, const ClosedLoopState& state);

/// Generation surplus minus transmission losses. Zero at any steady state.
double balance_residual(const ClosedLoopModel& model, const ClosedLoopState& state);

}  // namespace pricegrid

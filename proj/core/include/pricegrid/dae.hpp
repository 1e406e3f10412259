#pragma once

#include "pricegrid/closed_loop.hpp"

#include <string>
#include <variant>
#include <vector>

namespace pricegrid {

enum class IntegrationScheme { rk4 };

struct IntegratorConfig {
    double step = 0.005;             // h [s]
    double output_interval = 0.05;   // sampling period of the trajectory [s]
    double algebraic_tol = 1e-10;    // |g_alg|_inf at every stage
    int max_newton_iterations = 50;
    IntegrationScheme scheme = IntegrationScheme::rk4;
    double max_frequency = 0.1;      // |omega|_inf [p.u.] above which a run is diverged
    double min_voltage = 0.2;        // voltage validity bound [p.u.]

    void validate() const;
};

/// Active power demand step at `node` (external id).
struct StepLoad {
    double time = 0.0;
    int node = 0;
    double delta = 0.0;
};

/// Constant bias of the frequency measurement fed to the controller at a
/// generator node, active from `from_time` on.
struct ClockDrift {
    double from_time = 0.0;
    int node = 0;
    double offset_hz = 0.0;
};

/// Loss of the communication edge between two nodes (external ids); the
/// edge's virtual flow is dropped.
struct CommEdgeFailure {
    double time = 0.0;
    int from = 0;
    int to = 0;
};

using Event = std::variant<StepLoad, ClockDrift, CommEdgeFailure>;

double event_time(const Event& event);
std::string describe(const Event& event);

/// Applies the input change of `event` to `model`. Returns the index of the
/// removed communication edge, or -1.
int apply_to_model(const Event& event, ClosedLoopModel& model);

/// `model` after all `events` in time order.
ClosedLoopModel apply_events(ClosedLoopModel model, std::vector<Event> events);

struct AlgebraicSolution {
    Vec load_freq;
    Vec load_voltage;
    int iterations = 0;
    double residual = 0.0;
};

/// Newton iteration on the load-node equations for (omega_l, U_l) given the
/// differential states. `x.load_freq`/`x.load_voltage` are the warm start.
/// Throws SolverError when the iteration does not reach `tol`.
AlgebraicSolution solve_algebraic(const PlantState& x, const PlantInput& u, const Network& network,
                                  const PlantParams& params, double tol = 1e-10,
                                  int max_iterations = 50);

/// Differential part (theta, L, U_g, p_g, lambda, nu) of the closed loop.
Vec differential_state(const ClosedLoopState& state);
ClosedLoopState with_differential_state(const ClosedLoopState& like, const Vec& diff);

/// Time derivative of the differential part at a consistent state, using
/// u_c = -(omega_g + drift) as the controller's frequency feedback.
Vec closed_loop_rhs(const ClosedLoopModel& model, const ClosedLoopState& state);

/// Largest algebraic residual at `state`.
double algebraic_residual(const ClosedLoopModel& model, const ClosedLoopState& state);

/// Re-solves the algebraic states in place (warm started).
void make_consistent(const ClosedLoopModel& model, ClosedLoopState& state,
                     const IntegratorConfig& config);

/// One classical RK4 step of size h; every stage re-solves the algebraic
/// subsystem. The input must be consistent; so is the output.
ClosedLoopState step(const ClosedLoopModel& model, const ClosedLoopState& state, double h,
                     const IntegratorConfig& config);

struct SimulationSetup {
    ClosedLoopModel model;
    ClosedLoopState initial;
    std::vector<Event> events;
    double horizon = 0.0;
    IntegratorConfig config;
};

enum class RunStatus { completed, diverged };

struct TrajectorySample {
    double t = 0.0;
    ClosedLoopState state;
    Vec omega;    // all nodes, p.u.
    Vec p_load;   // all nodes
    Vec drift;    // per generator, p.u.
    std::vector<int> active_edges;  // indices into Trajectory::comm_edges
    double hamiltonian = 0.0;
    double balance_residual = 0.0;
    double algebraic_residual = 0.0;
};

struct EventRecord {
    double t = 0.0;
    std::string description;
    Vec p_load_before;
    Vec p_load_after;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::vector<EventRecord> events;
    std::vector<std::pair<int, int>> comm_edges;  // edges at t = 0
    RunStatus status = RunStatus::completed;
    std::string message;
    double end_time = 0.0;
    std::vector<double> mesh;      // every integration time point
    ClosedLoopModel final_model;   // model after the last applied event
};

/// Integrates over [0, horizon]. Event times are mesh points; after an event
/// the algebraic states are re-solved before continuing. A solver failure,
/// |omega| > max_frequency or a voltage below min_voltage stop the run with
/// status diverged and keep the samples recorded so far.
Trajectory simulate(const SimulationSetup& setup);

/// The model in force at a recorded sample: loads, drift and the surviving
/// communication edges of `sample` applied to the model the run started from.
ClosedLoopModel model_at(const ClosedLoopModel& initial, const Trajectory& trajectory,
                         const TrajectorySample& sample);

}  // namespace pricegrid

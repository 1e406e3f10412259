#pragma once

#include "pricegrid/dae.hpp"

#include <string>
#include <vector>

namespace pricegrid {

/// Offsets into the closed-loop vector
/// x = (tau_g p_g, tau_l lambda, tau_n nu, theta, L, U_g, omega_l, U_l)
/// and the input u = (U_f, q_l, p_l, drift).
struct BlockLayout {
    int ng = 0, n = 0, nl = 0, m = 0, mc = 0;

    int p_gen() const { return 0; }
    int price() const { return ng; }
    int flow() const { return ng + n; }
    int theta() const { return ng + n + mc; }
    int momentum() const { return theta() + m; }
    int gen_voltage() const { return momentum() + ng; }
    int load_freq() const { return gen_voltage() + ng; }
    int load_voltage() const { return load_freq() + nl; }
    int size() const { return load_voltage() + nl; }
    int num_differential() const { return load_freq(); }

    int in_excitation() const { return 0; }
    int in_q_load() const { return ng; }
    int in_p_load() const { return ng + nl; }
    int in_drift() const { return ng + nl + n; }
    int input_size() const { return in_drift() + ng; }

    static BlockLayout of(const ClosedLoopModel& model);
};

/// E x' = (J - R) grad H - r + F u at one state.
struct ClosedLoopBlocks {
    BlockLayout layout;
    Vec e;  // diagonal of E, entries 0 or 1
    Mat j;  // skew-symmetric, constant
    Mat r;  // diagonal, nonnegative, depends on U_l
    Vec dissipation;  // r(z, x)
    Mat f;

    Mat e_matrix() const { return e.asDiagonal(); }
};

Vec pack_scaled(const ClosedLoopModel& model, const ClosedLoopState& state);
ClosedLoopState unpack_scaled(const ClosedLoopModel& model, const Vec& x);

/// Inputs (U_f, q_l, p_l, drift) of `model`.
Vec closed_loop_input(const ClosedLoopModel& model);

/// grad H in the scaled layout; the controller part is (p_g, lambda, nu).
Vec closed_loop_gradient(const ClosedLoopModel& model, const ClosedLoopState& state);

ClosedLoopBlocks assemble_blocks(const ClosedLoopModel& model, const ClosedLoopState& state);

/// (J - R) z - r + F u in the scaled layout. Differential rows hold E x';
/// algebraic rows hold the load-node residuals.
Vec block_rhs(const ClosedLoopModel& model, const ClosedLoopState& state);

/// The same quantity composed from plant_residuals and controller_rhs with
/// u_c = -(omega_g + drift), scaled by the gains.
Vec composed_rhs(const ClosedLoopModel& model, const ClosedLoopState& state);

/// R z + r.
Vec dissipation_map(const ClosedLoopModel& model, const ClosedLoopState& state);

/// H(x) - (x - xbar)^T grad H(xbar) - H(xbar).
double shifted_hamiltonian(const ClosedLoopModel& model, const ClosedLoopState& state,
                           const ClosedLoopState& reference);

/// (z - zbar)^T [R(x) z + r(z, x) - R(xbar) zbar - r(zbar, xbar)].
double dissipation_gap(const ClosedLoopModel& model, const ClosedLoopState& state,
                       const ClosedLoopState& reference);

/// Power delivered through the inputs relative to the reference inputs,
/// (z - zbar)^T F (u - ubar).
double shifted_supply(const ClosedLoopModel& model, const ClosedLoopState& state,
                      const ClosedLoopState& reference, const Vec& reference_input);

struct DissipationSample {
    double t = 0.0;
    double hamiltonian = 0.0;
    double shifted = 0.0;        // Hbar
    double gap = 0.0;
    double supply = 0.0;         // (z - zbar)^T F (u - ubar)
    double dshifted_dt = 0.0;    // central difference of Hbar, NaN at the ends and across events
    double predicted_rate = 0.0; // -gap + supply + algebraic power (z - zbar)_alg^T x'_alg
    std::string status;          // "dissipative" when gap >= -tolerance
};

inline constexpr double kGapTolerance = 1e-9;

/// Shifted-passivity diagnostics along a trajectory. `initial` is the model
/// the run started from and `reference` the post-fault steady state of
/// `reference_model`; the virtual flows of the reference are recomputed for
/// the communication edges alive at each sample.
std::vector<DissipationSample> dissipation_trace(const Trajectory& trajectory,
                                                 const ClosedLoopModel& initial,
                                                 const ClosedLoopModel& reference_model,
                                                 const ClosedLoopState& reference);

}  // namespace pricegrid

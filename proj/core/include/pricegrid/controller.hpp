#pragma once

#include "pricegrid/common.hpp"
#include "pricegrid/network.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pricegrid {

/// Communication graph over all n nodes (internal indices). Each edge
/// carries one virtual power flow.
class CommGraph {
public:
    CommGraph() = default;

    /// Builds the incidence matrix (+1 at the first endpoint). Rejects self
    /// loops, duplicate edges and, unless `allow_disconnected`, graphs that
    /// do not span all nodes.
    static CommGraph from_edges(int num_nodes, std::vector<std::pair<int, int>> edges,
                                bool allow_disconnected = false);

    int num_nodes() const { return num_nodes_; }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const Mat& incidence() const { return incidence_; }
    bool connected() const { return connected_; }

    std::optional<int> edge_index(int a, int b) const;
    std::vector<int> neighbors(int node) const;

    /// Copy with one edge removed; the result may be disconnected.
    CommGraph without_edge(int index) const;

private:
    int num_nodes_ = 0;
    std::vector<std::pair<int, int>> edges_;
    Mat incidence_;
    bool connected_ = false;
};

enum class CommTopology { complete, physical, ring, open_ring };

CommTopology parse_comm_topology(std::string_view name);
std::string_view to_string(CommTopology kind);

/// complete: all node pairs; physical: copy of the grid lines; ring: nodes in
/// ascending id order closed back to the first; open_ring: ring without the
/// closing edge.
CommGraph build_comm_topology(CommTopology kind, const Network& network);

/// Strictly convex generation cost C(p_g).
class CostFunction {
public:
    /// C(p) = 1/2 sum p_i^2 / w_i with all w_i > 0.
    static CostFunction quadratic(Vec weights);
    /// User-supplied cost. Strict convexity is the caller's responsibility.
    static CostFunction custom(int num_generators, std::function<double(const Vec&)> value,
                               std::function<Vec(const Vec&)> gradient);

    int num_generators() const { return num_generators_; }
    bool is_quadratic() const { return weights_.has_value(); }
    const Vec& weights() const;

    double value(const Vec& p_gen) const;
    Vec gradient(const Vec& p_gen) const;

private:
    int num_generators_ = 0;
    std::optional<Vec> weights_;
    std::function<double(const Vec&)> value_;
    std::function<Vec(const Vec&)> gradient_;
};

/// Controller state (p_g, lambda, nu), stored unscaled.
struct ControllerState {
    Vec p_gen;  // per generator
    Vec price;  // per node
    Vec flow;   // per communication edge

    int size() const { return static_cast<int>(p_gen.size() + price.size() + flow.size()); }
    Vec pack() const;
    static ControllerState unpack(const Vec& x, int num_generators, int num_nodes, int num_edges);
};

/// Diagonal time constants tau_g, tau_lambda, tau_nu; all entries > 0.
struct ControllerGains {
    Vec tau_gen;
    Vec tau_price;
    Vec tau_flow;

    static ControllerGains uniform(int num_generators, int num_nodes, int num_edges,
                                   double value = 1.0);
    void validate(int num_generators, int num_nodes, int num_edges) const;
    Vec stacked() const;
    ControllerGains without_flow(int index) const;
};

enum class ControllerMode {
    lossy,     // balance includes the local conductance terms phi
    lossless,  // phi replaced by zero: the classic price controller
};

ControllerMode parse_controller_mode(std::string_view name);
std::string_view to_string(ControllerMode mode);

/// Marginal cost dC/dp_g.
Vec cost_gradient(const CostFunction& cost, const Vec& p_gen);

/// Primal-dual price dynamics with the frequency feedback u_c = -omega_meas:
///   tau_g p_g'   = -grad C(p_g) + I_g lambda - omega_meas
///   tau_l lambda' = D_c nu - I_g^T p_g + p_l + phi
///   tau_n nu'     = -D_c^T lambda
ControllerState controller_rhs(const ControllerState& x, const Vec& omega_meas, const Vec& p_load,
                               const Vec& phi, const CommGraph& comm, const ControllerGains& gains,
                               const CostFunction& cost, ControllerMode mode);

/// The same dynamics evaluated node by node. Each node only reads its own
/// variables and those of its communication neighbours; every edge flow is
/// updated by its first endpoint.
ControllerState controller_rhs_distributed(const ControllerState& x, const Vec& omega_meas,
                                           const Vec& p_load, const Vec& phi,
                                           const CommGraph& comm, const ControllerGains& gains,
                                           const CostFunction& cost, ControllerMode mode);

/// Skew-symmetric interconnection J_c of the controller in
/// x_c = (tau_g p_g, tau_l lambda, tau_n nu) coordinates.
Mat controller_interconnection(const CommGraph& comm, int num_generators);

/// x_c' = J_c grad H_c - r_c + (u_c, p_l, 0) with H_c = 1/2 x_c^T tau_c^-1 x_c.
Vec controller_rhs_port_hamiltonian(const Vec& scaled_state, const Vec& control_input,
                                    const Vec& p_load, const Vec& phi, const CommGraph& comm,
                                    const ControllerGains& gains, const CostFunction& cost,
                                    ControllerMode mode);

struct KktResidual {
    double stationarity = 0.0;     // |grad C(p_g) - I_g lambda|_inf
    double price_consensus = 0.0;  // |D_c^T lambda|_inf
    double balance = 0.0;          // |-D_c nu + I_g^T p_g - p_l - phi|_inf

    double max() const;
};

KktResidual kkt_residual(const ControllerState& x, const Vec& p_load, const Vec& phi,
                         const CommGraph& comm, const CostFunction& cost);

/// max_ij |grad C_i - grad C_j|; zero exactly when marginal costs agree.
double economic_dispatch_check(const Vec& p_gen, const CostFunction& cost);

}  // namespace pricegrid

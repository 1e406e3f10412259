#pragma once

#include "pricegrid/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pricegrid {

enum class NodeKind { generator, load };

/// One node of a raw topology description. Generator-only fields are ignored
/// for load nodes.
struct NodeSpec {
    int id = 0;
    NodeKind kind = NodeKind::generator;
    double damping = 0.0;            // A_i
    double shunt_susceptance = 0.0;  // B_ii, negative in the usual data sets
    double shunt_conductance = 0.0;  // extra shunt g_sh,i on top of the line terms
    double inertia = 0.0;            // M_i
    double xd = 0.0;                 // synchronous reactance
    double xd_prime = 0.0;           // transient reactance
    double tau_u = 0.0;              // open-circuit time constant [s]
};

struct LineSpec {
    int from = 0;
    int to = 0;
    double susceptance = 0.0;  // B_ij > 0 (negative of the line susceptance)
};

/// Raw topology as read from a network file, before conductances are derived.
struct GridSpec {
    std::vector<NodeSpec> nodes;
    std::vector<LineSpec> lines;
    double rx_ratio = 0.0;
};

/// A physical line between internal node indices. Orientation runs from the
/// lower to the higher external node id, so theta_e = theta_from - theta_to.
struct Line {
    int from = 0;
    int to = 0;
    double b = 0.0;  // B_ij > 0
    double g = 0.0;  // G_ij <= 0
};

/// Immutable grid topology and admittance data.
///
/// Internal node order puts all generators first (in declaration order)
/// followed by all loads, so the incidence matrix splits into the generator
/// block D_pg (first n_gen rows) and the load block D_pl.
class Network {
public:
    Network() = default;

    int num_nodes() const { return static_cast<int>(ids_.size()); }
    int num_generators() const { return num_generators_; }
    int num_loads() const { return num_nodes() - num_generators_; }
    int num_lines() const { return static_cast<int>(lines_.size()); }

    const std::vector<int>& ids() const { return ids_; }
    int id_of(int index) const { return ids_.at(static_cast<std::size_t>(index)); }
    /// Internal index of an external node id; throws ModelError if unknown.
    int index_of(int id) const;
    bool is_generator(int index) const { return index < num_generators_; }

    const std::vector<Line>& lines() const { return lines_; }
    const Vec& shunt_susceptance() const { return shunt_b_; }
    const Vec& shunt_conductance() const { return shunt_g_; }
    double rx_ratio() const { return rx_ratio_; }

    /// D_p, n x m with +1 at `from` and -1 at `to` in every column.
    const Mat& incidence() const { return incidence_; }
    auto generator_incidence() const { return incidence_.topRows(num_generators_); }
    auto load_incidence() const { return incidence_.bottomRows(num_loads()); }

    /// Line indices incident to each node.
    const std::vector<std::vector<int>>& incident_lines() const { return incident_; }

    /// Index of the line joining two internal nodes, if any.
    std::optional<int> line_between(int a, int b) const;

private:
    friend Network build_network(const GridSpec&, double);

    std::vector<int> ids_;
    int num_generators_ = 0;
    std::vector<Line> lines_;
    Vec shunt_b_;
    Vec shunt_g_;
    double rx_ratio_ = 0.0;
    Mat incidence_;
    std::vector<std::vector<int>> incident_;
};

struct GeneratorParams {
    Vec inertia;   // M_i
    Vec damping;   // A_i
    Vec xd;        // X_d,i
    Vec xd_prime;  // X'_d,i
    Vec tau_u;     // tau_U,i

    /// X_d,i - X'_d,i
    Vec reactance_gap() const { return xd - xd_prime; }
    /// R_g,i = (X_d,i - X'_d,i) / tau_U,i
    Vec voltage_damping() const { return reactance_gap().cwiseQuotient(tau_u); }
};

struct LoadParams {
    Vec damping;  // A_i at load nodes
};

struct PlantParams {
    GeneratorParams gen;
    LoadParams load;
};

/// Builds the network with G_ij = -rx_ratio * B_ij on every line and shunt
/// conductances G_ii = -sum_j G_ij + g_sh,i.
///
/// Throws ModelError for a disconnected graph, duplicate lines, self loops,
/// unknown node ids or nonpositive susceptances.
Network build_network(const GridSpec& spec, double rx_ratio);
inline Network build_network(const GridSpec& spec) { return build_network(spec, spec.rx_ratio); }

/// Extracts per-node dynamic parameters in the network's internal order and
/// validates M > 0, A > 0, X_d > X'_d > 0, tau_U > 0.
PlantParams extract_params(const GridSpec& spec, const Network& network);

/// Connectivity of an undirected graph on `num_nodes` vertices.
bool is_connected(int num_nodes, const std::vector<std::pair<int, int>>& edges);

/// Largest component of theta_diff outside the column space of D_p^T.
/// Zero (up to rounding) when the edge angles derive from nodal angles.
double cycle_space_residual(const Network& network, const Vec& theta_diff);

}  // namespace pricegrid

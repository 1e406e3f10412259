#include "pricegrid/network.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace pricegrid {

int Network::index_of(int id) const
{
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) {
        throw ModelError("unknown node id " + std::to_string(id));
    }
    return static_cast<int>(it - ids_.begin());
}

std::optional<int> Network::line_between(int a, int b) const
{
    for (int e = 0; e < num_lines(); ++e) {
        const auto& line = lines_[static_cast<std::size_t>(e)];
        if ((line.from == a && line.to == b) || (line.from == b && line.to == a)) {
            return e;
        }
    }
    return std::nullopt;
}

bool is_connected(int num_nodes, const std::vector<std::pair<int, int>>& edges)
{
    if (num_nodes <= 1) {
        return true;
    }
    std::vector<int> parent(static_cast<std::size_t>(num_nodes));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            auto& p = parent[static_cast<std::size_t>(v)];
            p = parent[static_cast<std::size_t>(p)];
            v = p;
        }
        return v;
    };
    int components = num_nodes;
    for (const auto& [a, b] : edges) {
        int ra = find(a);
        int rb = find(b);
        if (ra != rb) {
            parent[static_cast<std::size_t>(ra)] = rb;
            --components;
        }
    }
    return components == 1;
}

Network build_network(const GridSpec& spec, double rx_ratio)
{
    detail::require(rx_ratio >= 0.0, "R/X ratio must be nonnegative");
    detail::require(!spec.nodes.empty(), "network has no nodes");

    Network net;
    net.rx_ratio_ = rx_ratio;

    std::vector<const NodeSpec*> ordered;
    for (const auto& node : spec.nodes) {
        if (node.kind == NodeKind::generator) {
            ordered.push_back(&node);
        }
    }
    net.num_generators_ = static_cast<int>(ordered.size());
    for (const auto& node : spec.nodes) {
        if (node.kind == NodeKind::load) {
            ordered.push_back(&node);
        }
    }

    std::set<int> seen_ids;
    for (const auto* node : ordered) {
        if (!seen_ids.insert(node->id).second) {
            throw ModelError("duplicate node id " + std::to_string(node->id));
        }
        net.ids_.push_back(node->id);
    }

    const int n = net.num_nodes();
    net.shunt_b_ = Vec::Zero(n);
    net.shunt_g_ = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        net.shunt_b_(i) = ordered[static_cast<std::size_t>(i)]->shunt_susceptance;
        net.shunt_g_(i) = ordered[static_cast<std::size_t>(i)]->shunt_conductance;
    }

    std::set<std::pair<int, int>> seen_lines;
    std::vector<std::pair<int, int>> edges;
    for (const auto& raw : spec.lines) {
        if (raw.from == raw.to) {
            throw ModelError("self loop at node " + std::to_string(raw.from));
        }
        if (!(raw.susceptance > 0.0)) {
            std::ostringstream msg;
            msg << "line (" << raw.from << ", " << raw.to << ") has nonpositive susceptance "
                << raw.susceptance;
            throw ModelError(msg.str());
        }
        const int lo = std::min(raw.from, raw.to);
        const int hi = std::max(raw.from, raw.to);
        if (!seen_lines.insert({lo, hi}).second) {
            throw ModelError("duplicate line (" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
        }
        Line line;
        line.from = net.index_of(lo);
        line.to = net.index_of(hi);
        line.b = raw.susceptance;
        line.g = -rx_ratio * raw.susceptance;
        net.lines_.push_back(line);
        edges.emplace_back(line.from, line.to);
    }

    if (!is_connected(n, edges)) {
        throw ModelError("physical network is not connected");
    }

    const int m = net.num_lines();
    net.incidence_ = Mat::Zero(n, m);
    net.incident_.assign(static_cast<std::size_t>(n), {});
    for (int e = 0; e < m; ++e) {
        const auto& line = net.lines_[static_cast<std::size_t>(e)];
        net.incidence_(line.from, e) = 1.0;
        net.incidence_(line.to, e) = -1.0;
        net.incident_[static_cast<std::size_t>(line.from)].push_back(e);
        net.incident_[static_cast<std::size_t>(line.to)].push_back(e);
        net.shunt_g_(line.from) -= line.g;
        net.shunt_g_(line.to) -= line.g;
    }
    return net;
}

PlantParams extract_params(const GridSpec& spec, const Network& network)
{
    const int ng = network.num_generators();
    const int nl = network.num_loads();
    PlantParams params;
    params.gen.inertia = Vec::Zero(ng);
    params.gen.damping = Vec::Zero(ng);
    params.gen.xd = Vec::Zero(ng);
    params.gen.xd_prime = Vec::Zero(ng);
    params.gen.tau_u = Vec::Zero(ng);
    params.load.damping = Vec::Zero(nl);

    for (const auto& node : spec.nodes) {
        const int i = network.index_of(node.id);
        const std::string where = "node " + std::to_string(node.id) + ": ";
        if (node.kind == NodeKind::generator) {
            detail::require(node.inertia > 0.0, where + "inertia M must be positive");
            detail::require(node.damping > 0.0, where + "damping A must be positive");
            detail::require(node.xd_prime > 0.0, where + "transient reactance must be positive");
            detail::require(node.xd > node.xd_prime,
                            where + "synchronous reactance must exceed transient reactance");
            detail::require(node.tau_u > 0.0, where + "tau_U must be positive");
            params.gen.inertia(i) = node.inertia;
            params.gen.damping(i) = node.damping;
            params.gen.xd(i) = node.xd;
            params.gen.xd_prime(i) = node.xd_prime;
            params.gen.tau_u(i) = node.tau_u;
        } else {
            // A_i = 0 would turn the load frequency equation into a pure
            // balance constraint and raise the DAE index.
            detail::require(node.damping > 0.0, where + "load damping A must be positive");
            params.load.damping(i - ng) = node.damping;
        }
    }
    return params;
}

double cycle_space_residual(const Network& network, const Vec& theta_diff)
{
    if (theta_diff.size() == 0) {
        return 0.0;
    }
    const Mat& d = network.incidence();
    // Least-squares nodal angles, then compare D_p^T theta with the input.
    Vec theta = d.transpose().completeOrthogonalDecomposition().solve(theta_diff);
    return (d.transpose() * theta - theta_diff).cwiseAbs().maxCoeff();
}

}  // namespace pricegrid

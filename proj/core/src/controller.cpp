#include "pricegrid/controller.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace pricegrid {

// ---------------------------------------------------------------------------
// Communication graph
// ---------------------------------------------------------------------------

CommGraph CommGraph::from_edges(int num_nodes, std::vector<std::pair<int, int>> edges,
                                bool allow_disconnected)
{
    detail::require(num_nodes > 0, "communication graph needs at least one node");
    std::set<std::pair<int, int>> seen;
    for (const auto& [a, b] : edges) {
        detail::require(a >= 0 && a < num_nodes && b >= 0 && b < num_nodes,
                        "communication edge references an unknown node");
        detail::require(a != b, "communication edge is a self loop");
        detail::require(seen.insert({std::min(a, b), std::max(a, b)}).second,
                        "duplicate communication edge");
    }

    CommGraph g;
    g.num_nodes_ = num_nodes;
    g.edges_ = std::move(edges);
    g.connected_ = is_connected(num_nodes, g.edges_);
    if (!allow_disconnected) {
        detail::require(g.connected_, "communication graph must connect all nodes");
    }
    g.incidence_ = Mat::Zero(num_nodes, g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) {
        g.incidence_(g.edges_[static_cast<std::size_t>(e)].first, e) = 1.0;
        g.incidence_(g.edges_[static_cast<std::size_t>(e)].second, e) = -1.0;
    }
    return g;
}

std::optional<int> CommGraph::edge_index(int a, int b) const
{
    for (int e = 0; e < num_edges(); ++e) {
        const auto& [u, v] = edges_[static_cast<std::size_t>(e)];
        if ((u == a && v == b) || (u == b && v == a)) {
            return e;
        }
    }
    return std::nullopt;
}

std::vector<int> CommGraph::neighbors(int node) const
{
    std::vector<int> out;
    for (const auto& [a, b] : edges_) {
        if (a == node) {
            out.push_back(b);
        } else if (b == node) {
            out.push_back(a);
        }
    }
    return out;
}

CommGraph CommGraph::without_edge(int index) const
{
    detail::require(index >= 0 && index < num_edges(), "communication edge index out of range");
    auto edges = edges_;
    edges.erase(edges.begin() + index);
    return from_edges(num_nodes_, std::move(edges), true);
}

CommTopology parse_comm_topology(std::string_view name)
{
    if (name == "complete" || name == "a") return CommTopology::complete;
    if (name == "physical" || name == "b") return CommTopology::physical;
    if (name == "ring" || name == "c") return CommTopology::ring;
    if (name == "open_ring" || name == "d") return CommTopology::open_ring;
    throw ModelError("unknown communication topology '" + std::string(name) + "'");
}

std::string_view to_string(CommTopology kind)
{
    switch (kind) {
    case CommTopology::complete: return "complete";
    case CommTopology::physical: return "physical";
    case CommTopology::ring: return "ring";
    case CommTopology::open_ring: return "open_ring";
    }
    return "unknown";
}

CommGraph build_comm_topology(CommTopology kind, const Network& network)
{
    const int n = network.num_nodes();
    // Node indices sorted by external id.
    std::vector<int> by_id(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) by_id[static_cast<std::size_t>(i)] = i;
    std::sort(by_id.begin(), by_id.end(),
              [&](int a, int b) { return network.id_of(a) < network.id_of(b); });

    std::vector<std::pair<int, int>> edges;
    switch (kind) {
    case CommTopology::complete:
        for (std::size_t a = 0; a < by_id.size(); ++a)
            for (std::size_t b = a + 1; b < by_id.size(); ++b) edges.emplace_back(by_id[a], by_id[b]);
        break;
    case CommTopology::physical:
        for (const auto& line : network.lines()) edges.emplace_back(line.from, line.to);
        break;
    case CommTopology::ring:
    case CommTopology::open_ring:
        for (std::size_t a = 0; a + 1 < by_id.size(); ++a) edges.emplace_back(by_id[a], by_id[a + 1]);
        if (kind == CommTopology::ring && n > 2) edges.emplace_back(by_id.front(), by_id.back());
        break;
    }
    return CommGraph::from_edges(n, std::move(edges));
}

// ---------------------------------------------------------------------------
// Cost
// ---------------------------------------------------------------------------

CostFunction CostFunction::quadratic(Vec weights)
{
    detail::require(weights.size() > 0, "cost needs at least one generator weight");
    detail::require((weights.array() > 0.0).all(), "cost weights must be positive");
    CostFunction c;
    c.num_generators_ = static_cast<int>(weights.size());
    c.weights_ = std::move(weights);
    return c;
}

CostFunction CostFunction::custom(int num_generators, std::function<double(const Vec&)> value,
                                  std::function<Vec(const Vec&)> gradient)
{
    detail::require(num_generators > 0, "cost needs at least one generator");
    detail::require(static_cast<bool>(value) && static_cast<bool>(gradient),
                    "custom cost needs both value and gradient");
    CostFunction c;
    c.num_generators_ = num_generators;
    c.value_ = std::move(value);
    c.gradient_ = std::move(gradient);
    return c;
}

const Vec& CostFunction::weights() const
{
    if (!weights_) {
        throw ModelError("cost function is not of quadratic kind");
    }
    return *weights_;
}

double CostFunction::value(const Vec& p_gen) const
{
    detail::require(p_gen.size() == num_generators_, "cost argument has wrong size");
    if (weights_) {
        return 0.5 * p_gen.cwiseAbs2().cwiseQuotient(*weights_).sum();
    }
    return value_(p_gen);
}

Vec CostFunction::gradient(const Vec& p_gen) const
{
    detail::require(p_gen.size() == num_generators_, "cost argument has wrong size");
    if (weights_) {
        return p_gen.cwiseQuotient(*weights_);
    }
    return gradient_(p_gen);
}

Vec cost_gradient(const CostFunction& cost, const Vec& p_gen) { return cost.gradient(p_gen); }

// ---------------------------------------------------------------------------
// State, gains, modes
// ---------------------------------------------------------------------------

Vec ControllerState::pack() const
{
    Vec x(size());
    x << p_gen, price, flow;
    return x;
}

ControllerState ControllerState::unpack(const Vec& x, int num_generators, int num_nodes,
                                        int num_edges)
{
    detail::require(x.size() == num_generators + num_nodes + num_edges,
                    "controller state vector has wrong size");
    ControllerState s;
    s.p_gen = x.segment(0, num_generators);
    s.price = x.segment(num_generators, num_nodes);
    s.flow = x.segment(num_generators + num_nodes, num_edges);
    return s;
}

ControllerGains ControllerGains::uniform(int num_generators, int num_nodes, int num_edges,
                                         double value)
{
    detail::require(value > 0.0, "controller gains must be positive");
    return {Vec::Constant(num_generators, value), Vec::Constant(num_nodes, value),
            Vec::Constant(num_edges, value)};
}

void ControllerGains::validate(int num_generators, int num_nodes, int num_edges) const
{
    detail::require(tau_gen.size() == num_generators && tau_price.size() == num_nodes &&
                        tau_flow.size() == num_edges,
                    "controller gain dimensions do not match the graph");
    detail::require((tau_gen.array() > 0.0).all() && (tau_price.array() > 0.0).all() &&
                        (tau_flow.array() > 0.0).all(),
                    "controller gains must be positive");
}

Vec ControllerGains::stacked() const
{
    Vec t(tau_gen.size() + tau_price.size() + tau_flow.size());
    t << tau_gen, tau_price, tau_flow;
    return t;
}

ControllerGains ControllerGains::without_flow(int index) const
{
    detail::require(index >= 0 && index < tau_flow.size(), "flow gain index out of range");
    ControllerGains g = *this;
    g.tau_flow.resize(tau_flow.size() - 1);
    g.tau_flow << tau_flow.head(index), tau_flow.tail(tau_flow.size() - index - 1);
    return g;
}

ControllerMode parse_controller_mode(std::string_view name)
{
    if (name == "lossy") return ControllerMode::lossy;
    if (name == "lossless") return ControllerMode::lossless;
    throw ModelError("unknown controller mode '" + std::string(name) + "'");
}

std::string_view to_string(ControllerMode mode)
{
    return mode == ControllerMode::lossy ? "lossy" : "lossless";
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

namespace {

void check_dims(const ControllerState& x, const Vec& omega_meas, const Vec& p_load, const Vec& phi,
                const CommGraph& comm, const ControllerGains& gains, const CostFunction& cost)
{
    const int n = comm.num_nodes();
    const int ng = static_cast<int>(x.p_gen.size());
    const int mc = comm.num_edges();
    detail::require(ng == cost.num_generators() && ng <= n, "generator count mismatch");
    detail::require(x.price.size() == n, "price vector must have one entry per node");
    detail::require(x.flow.size() == mc, "flow vector must have one entry per communication edge");
    detail::require(omega_meas.size() == ng, "frequency measurement must cover all generators");
    detail::require(p_load.size() == n && phi.size() == n, "load and loss vectors need n entries");
    gains.validate(ng, n, mc);
}

}  // namespace

ControllerState controller_rhs(const ControllerState& x, const Vec& omega_meas, const Vec& p_load,
                               const Vec& phi, const CommGraph& comm, const ControllerGains& gains,
                               const CostFunction& cost, ControllerMode mode)
{
    check_dims(x, omega_meas, p_load, phi, comm, gains, cost);
    const int ng = static_cast<int>(x.p_gen.size());
    const Mat& dc = comm.incidence();

    Vec injection = Vec::Zero(comm.num_nodes());
    injection.head(ng) = x.p_gen;
    const Vec losses = mode == ControllerMode::lossy ? phi : Vec::Zero(phi.size());

    ControllerState dx;
    dx.p_gen = (-cost.gradient(x.p_gen) + x.price.head(ng) - omega_meas).cwiseQuotient(gains.tau_gen);
    dx.price = (dc * x.flow - injection + p_load + losses).cwiseQuotient(gains.tau_price);
    dx.flow = (-dc.transpose() * x.price).cwiseQuotient(gains.tau_flow);
    return dx;
}

ControllerState controller_rhs_distributed(const ControllerState& x, const Vec& omega_meas,
                                           const Vec& p_load, const Vec& phi,
                                           const CommGraph& comm, const ControllerGains& gains,
                                           const CostFunction& cost, ControllerMode mode)
{
    check_dims(x, omega_meas, p_load, phi, comm, gains, cost);
    const int n = comm.num_nodes();
    const int ng = static_cast<int>(x.p_gen.size());
    const Vec marginal = cost.gradient(x.p_gen);

    ControllerState dx;
    dx.p_gen = Vec::Zero(ng);
    dx.price = Vec::Zero(n);
    dx.flow = Vec::Zero(comm.num_edges());

    for (int i = 0; i < n; ++i) {
        // Messages node i receives: neighbour prices on every incident edge.
        std::map<int, double> neighbour_price;
        for (int j : comm.neighbors(i)) {
            neighbour_price[j] = x.price(j);
        }

        if (i < ng) {
            dx.p_gen(i) = (-marginal(i) + x.price(i) - omega_meas(i)) / gains.tau_gen(i);
        }

        double net_flow = 0.0;
        for (int e = 0; e < comm.num_edges(); ++e) {
            const auto& [a, b] = comm.edges()[static_cast<std::size_t>(e)];
            if (a == i) {
                net_flow += x.flow(e);
                dx.flow(e) = -(x.price(i) - neighbour_price.at(b)) / gains.tau_flow(e);
            } else if (b == i) {
                net_flow -= x.flow(e);
            }
        }
        const double injection = i < ng ? x.p_gen(i) : 0.0;
        const double loss = mode == ControllerMode::lossy ? phi(i) : 0.0;
        dx.price(i) = (net_flow - injection + p_load(i) + loss) / gains.tau_price(i);
    }
    return dx;
}

Mat controller_interconnection(const CommGraph& comm, int num_generators)
{
    const int n = comm.num_nodes();
    const int ng = num_generators;
    const int mc = comm.num_edges();
    Mat j = Mat::Zero(ng + n + mc, ng + n + mc);
    j.block(0, ng, ng, ng) = Mat::Identity(ng, ng);
    j.block(ng, 0, ng, ng) = -Mat::Identity(ng, ng);
    j.block(ng, ng + n, n, mc) = comm.incidence();
    j.block(ng + n, ng, mc, n) = -comm.incidence().transpose();
    return j;
}

Vec controller_rhs_port_hamiltonian(const Vec& scaled_state, const Vec& control_input,
                                    const Vec& p_load, const Vec& phi, const CommGraph& comm,
                                    const ControllerGains& gains, const CostFunction& cost,
                                    ControllerMode mode)
{
    const int n = comm.num_nodes();
    const int ng = cost.num_generators();
    const int mc = comm.num_edges();
    gains.validate(ng, n, mc);
    detail::require(scaled_state.size() == ng + n + mc, "controller state vector has wrong size");

    const Vec co_state = scaled_state.cwiseQuotient(gains.stacked());
    Vec dissipation = Vec::Zero(ng + n + mc);
    dissipation.head(ng) = cost.gradient(co_state.head(ng));
    if (mode == ControllerMode::lossy) {
        dissipation.segment(ng, n) = -phi;
    }
    Vec input = Vec::Zero(ng + n + mc);
    input.head(ng) = control_input;
    input.segment(ng, n) = p_load;
    return controller_interconnection(comm, ng) * co_state - dissipation + input;
}

double KktResidual::max() const { return std::max({stationarity, price_consensus, balance}); }

KktResidual kkt_residual(const ControllerState& x, const Vec& p_load, const Vec& phi,
                         const CommGraph& comm, const CostFunction& cost)
{
    const int ng = static_cast<int>(x.p_gen.size());
    const int n = comm.num_nodes();
    detail::require(x.price.size() == n && x.flow.size() == comm.num_edges(),
                    "controller state does not match the communication graph");
    const Mat& dc = comm.incidence();

    Vec injection = Vec::Zero(n);
    injection.head(ng) = x.p_gen;

    KktResidual r;
    if (ng > 0) {
        r.stationarity = (cost.gradient(x.p_gen) - x.price.head(ng)).cwiseAbs().maxCoeff();
    }
    if (comm.num_edges() > 0) {
        r.price_consensus = (dc.transpose() * x.price).cwiseAbs().maxCoeff();
    }
    r.balance = (-dc * x.flow + injection - p_load - phi).cwiseAbs().maxCoeff();
    return r;
}

double economic_dispatch_check(const Vec& p_gen, const CostFunction& cost)
{
    const Vec g = cost.gradient(p_gen);
    return g.maxCoeff() - g.minCoeff();
}

}  // namespace pricegrid

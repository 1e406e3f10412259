#include "doctest.h"
#include "fixtures.hpp"

#include <Eigen/Dense>

#include <set>

using namespace pgtest;

namespace {

Vec paper_weights()
{
    Vec w(5);
    w << 1.0, 1.1, 1.2, 1.3, 1.4;
    return w;
}

}  // namespace

TEST_CASE("communication topologies")
{
    Paper p;
    const CommGraph physical = build_comm_topology(CommTopology::physical, p.net);
    CHECK(physical.num_edges() == 8);
    std::set<std::pair<int, int>> pairs;
    for (const auto& [a, b] : physical.edges()) {
        pairs.insert(std::minmax(p.net.id_of(a), p.net.id_of(b)));
    }
    const std::set<std::pair<int, int>> table = {{1, 2}, {1, 5}, {1, 6}, {2, 3},
                                                 {2, 5}, {3, 4}, {4, 5}, {5, 7}};
    CHECK(pairs == table);

    CHECK(build_comm_topology(CommTopology::complete, p.net).num_edges() == 21);
    CHECK(build_comm_topology(CommTopology::ring, p.net).num_edges() == 7);

    const CommGraph path = build_comm_topology(CommTopology::open_ring, p.net);
    CHECK(path.num_edges() == 6);
    CHECK(path.connected());

    for (auto kind : {CommTopology::complete, CommTopology::physical, CommTopology::ring,
                      CommTopology::open_ring}) {
        const CommGraph g = build_comm_topology(kind, p.net);
        Eigen::FullPivLU<Mat> lu(g.incidence().transpose());
        CHECK(lu.rank() == 6);
        CHECK(parse_comm_topology(to_string(kind)) == kind);
    }
}

TEST_CASE("comm graph validation")
{
    CHECK_THROWS_AS(CommGraph::from_edges(3, {{0, 0}, {1, 2}}), ModelError);
    CHECK_THROWS_AS(CommGraph::from_edges(3, {{0, 1}, {1, 0}, {1, 2}}), ModelError);
    CHECK_THROWS_AS(CommGraph::from_edges(3, {{0, 1}}), ModelError);
    const CommGraph partial = CommGraph::from_edges(3, {{0, 1}}, true);
    CHECK_FALSE(partial.connected());

    const CommGraph g = CommGraph::from_edges(3, {{0, 1}, {1, 2}});
    const CommGraph cut = g.without_edge(0);
    CHECK(cut.num_edges() == 1);
    CHECK_FALSE(cut.connected());
    CHECK(g.edge_index(2, 1) == 1);
}

TEST_CASE("quadratic cost")
{
    const Vec w = paper_weights();
    const CostFunction cost = CostFunction::quadratic(w);
    const double c = 0.37;
    const Vec grad = cost_gradient(cost, w * c);
    for (int i = 0; i < 5; ++i) CHECK(grad[i] == doctest::Approx(c));
    CHECK(cost_gradient(cost, Vec::Zero(5)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(economic_dispatch_check(w * c, cost) < 1e-15);

    Vec p(5);
    p << 0.1, -0.2, 0.3, 0.05, 0.4;
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
        Vec pp = p, pm = p;
        pp[i] += h;
        pm[i] -= h;
        CHECK((cost.value(pp) - cost.value(pm)) / (2 * h) == doctest::Approx(cost.gradient(p)[i]));
    }
    CHECK_THROWS_AS(CostFunction::quadratic(Vec::Constant(2, -1.0)), ModelError);
}

TEST_CASE("price consensus on uniform prices")
{
    Paper p;
    const CommGraph comm = build_comm_topology(CommTopology::complete, p.net);
    std::mt19937 rng(2);
    ControllerState x = random_controller_state(5, 7, comm.num_edges(), rng);
    x.price.setConstant(0.42);
    const ControllerState d = controller_rhs(x, Vec::Zero(5), Vec::Zero(7), Vec::Zero(7), comm,
                                             ControllerGains::uniform(5, 7, comm.num_edges()),
                                             CostFunction::quadratic(paper_weights()), ControllerMode::lossy);
    CHECK(d.flow.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("KKT point is a fixed point of the price dynamics")
{
    const PreparedRun& run = paper_run();
    const ClosedLoopModel& m = run.model;
    const ClosedLoopState& x = run.initial.state;
    const Vec phi = conductance_terms(x.plant.theta, x.plant.voltages(), m.network, m.params.gen).phi;

    const KktResidual k = kkt_residual(x.ctrl, m.p_load, phi, m.comm, m.cost);
    CHECK(k.max() < 1e-7);

    const ControllerState d =
        controller_rhs(x.ctrl, Vec::Zero(5), m.p_load, phi, m.comm, m.gains, m.cost, m.mode);
    CHECK(d.p_gen.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(d.price.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(d.flow.cwiseAbs().maxCoeff() < 1e-9);

    const KktResidual zero =
        kkt_residual({Vec::Zero(5), Vec::Zero(7), Vec::Zero(m.comm.num_edges())}, Vec::Zero(7), Vec::Zero(7),
                     m.comm, m.cost);
    CHECK(zero.max() == 0.0);

    ControllerState bumped = x.ctrl;
    bumped.price[3] += 1e-3;
    CHECK(kkt_residual(bumped, m.p_load, phi, m.comm, m.cost).price_consensus > 0.0);
}

TEST_CASE("scaled port-Hamiltonian form matches the dual form")
{
    Paper p;
    const CommGraph comm = build_comm_topology(CommTopology::ring, p.net);
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> d(0.05, 2.0);
    ControllerGains gains;
    gains.tau_gen = Vec::NullaryExpr(5, [&] { return d(rng); });
    gains.tau_price = Vec::NullaryExpr(7, [&] { return d(rng); });
    gains.tau_flow = Vec::NullaryExpr(comm.num_edges(), [&] { return d(rng); });
    const CostFunction cost = CostFunction::quadratic(paper_weights());

    for (auto mode : {ControllerMode::lossy, ControllerMode::lossless}) {
        const ControllerState x = random_controller_state(5, 7, comm.num_edges(), rng);
        const Vec omega = Vec::NullaryExpr(5, [&] { return d(rng) * 1e-3; });
        const Vec load = Vec::NullaryExpr(7, [&] { return d(rng); });
        const Vec phi = Vec::NullaryExpr(7, [&] { return d(rng) * 1e-2; });
        const ControllerState dual = controller_rhs(x, omega, load, phi, comm, gains, cost, mode);

        Vec scaled(x.size());
        scaled << x.p_gen.cwiseProduct(gains.tau_gen), x.price.cwiseProduct(gains.tau_price),
            x.flow.cwiseProduct(gains.tau_flow);
        const Vec ph = controller_rhs_port_hamiltonian(scaled, -omega, load, phi, comm, gains, cost, mode);
        Vec expected(x.size());
        expected << dual.p_gen.cwiseProduct(gains.tau_gen), dual.price.cwiseProduct(gains.tau_price),
            dual.flow.cwiseProduct(gains.tau_flow);
        CHECK((ph - expected).cwiseAbs().maxCoeff() < 1e-12);
    }

    const Mat jc = controller_interconnection(comm, 5);
    CHECK((jc + jc.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lossless mode ignores phi")
{
    Paper p;
    const CommGraph comm = build_comm_topology(CommTopology::physical, p.net);
    std::mt19937 rng(4);
    const ControllerState x = random_controller_state(5, 7, 8, rng);
    const ControllerGains gains = ControllerGains::uniform(5, 7, 8);
    const CostFunction cost = CostFunction::quadratic(paper_weights());
    const Vec load = Vec::Constant(7, 0.1);
    const ControllerState a =
        controller_rhs(x, Vec::Zero(5), load, Vec::Zero(7), comm, gains, cost, ControllerMode::lossless);
    const ControllerState b =
        controller_rhs(x, Vec::Zero(5), load, Vec::Constant(7, 0.3), comm, gains, cost, ControllerMode::lossless);
    CHECK((a.price - b.price).cwiseAbs().maxCoeff() == 0.0);
    const ControllerState c =
        controller_rhs(x, Vec::Zero(5), load, Vec::Constant(7, 0.3), comm, gains, cost, ControllerMode::lossy);
    CHECK((c.price - a.price).cwiseAbs().minCoeff() == doctest::Approx(0.3));
}

TEST_CASE("distributed evaluation reads only neighbours")
{
    Paper p;
    const CommGraph comm = build_comm_topology(CommTopology::physical, p.net);
    std::mt19937 rng(13);
    const ControllerState x = random_controller_state(5, 7, 8, rng);
    const Vec omega = Vec::Constant(5, 1e-3);
    const Vec load = Vec::Constant(7, 0.2);
    const Vec phi = Vec::Constant(7, 0.01);
    const ControllerGains gains = ControllerGains::uniform(5, 7, 8, 0.1);
    const CostFunction cost = CostFunction::quadratic(paper_weights());
    const auto eval = [&](const ControllerState& s) {
        return controller_rhs_distributed(s, omega, load, phi, comm, gains, cost, ControllerMode::lossy);
    };

    const ControllerState central = controller_rhs(x, omega, load, phi, comm, gains, cost, ControllerMode::lossy);
    const ControllerState local = eval(x);
    CHECK((central.pack() - local.pack()).cwiseAbs().maxCoeff() < 1e-15);

    // Perturbing node j's price may only change node i's outputs when j is i or a neighbour.
    for (int j = 0; j < 7; ++j) {
        ControllerState y = x;
        y.price[j] += 0.1;
        const ControllerState dy = eval(y);
        const auto nb = comm.neighbors(j);
        for (int i = 0; i < 7; ++i) {
            const bool near = i == j || std::find(nb.begin(), nb.end(), i) != nb.end();
            if (near) continue;
            CHECK(dy.price[i] == local.price[i]);
            if (i < 5) CHECK(dy.p_gen[i] == local.p_gen[i]);
        }
        for (int e = 0; e < comm.num_edges(); ++e) {
            const auto [a, b] = comm.edges()[static_cast<std::size_t>(e)];
            if (a != j && b != j) CHECK(dy.flow[e] == local.flow[e]);
        }
    }
}

TEST_CASE("gain validation")
{
    ControllerGains g = ControllerGains::uniform(2, 3, 2);
    CHECK_NOTHROW(g.validate(2, 3, 2));
    g.tau_price[1] = 0.0;
    CHECK_THROWS_AS(g.validate(2, 3, 2), ModelError);
    CHECK_THROWS_AS(ControllerGains::uniform(2, 3, 2).validate(2, 4, 2), ModelError);
}

TEST_CASE("controller modes parse")
{
    CHECK(parse_controller_mode("lossy") == ControllerMode::lossy);
    CHECK(parse_controller_mode("lossless") == ControllerMode::lossless);
}

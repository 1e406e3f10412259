#include "pricegrid/equilibrium.hpp"

#include "pricegrid/power_flow.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace pricegrid {

EquilibriumProblem EquilibriumProblem::from_model(const ClosedLoopModel& model)
{
    EquilibriumProblem p;
    p.network = model.network;
    p.params = model.params;
    p.cost = model.cost;
    p.comm = model.comm;
    p.mode = model.mode;
    p.p_load = model.p_load;
    p.q_load = model.q_load;
    p.drift = model.drift;
    p.excitation = model.excitation;
    return p;
}

namespace {

// Unknowns of the Newton system before the voltage/excitation selection.
struct Point {
    Vec angles;      // all nodes
    Vec voltage;     // all nodes
    Vec excitation;  // per generator
    Vec p_gen;
    double price = 0.0;
    double sync = 0.0;
};

class SteadyState {
public:
    explicit SteadyState(const EquilibriumProblem& problem)
        : pb_(problem),
          n_(problem.network.num_nodes()),
          ng_(problem.network.num_generators()),
          nl_(problem.network.num_loads()),
          calibrate_(!problem.excitation.has_value())
    {
        drift_ = problem.drift.size() == 0 ? Vec::Zero(ng_) : problem.drift;
    }

    int num_unknowns() const { return 2 * n_ + ng_ + 1; }

    Vec residual(const Point& x) const
    {
        const auto& net = pb_.network;
        const auto& gen = pb_.params.gen;
        const Vec theta = net.incidence().transpose() * x.angles;
        const PowerFlows f = power_flows(theta, x.voltage, net);
        const Vec ug = x.voltage.head(ng_);

        Vec r(num_unknowns());
        int o = 0;
        r.segment(o, ng_) = -gen.damping * x.sync + x.p_gen - pb_.p_load.head(ng_) - f.p.head(ng_);
        o += ng_;
        r.segment(o, nl_) = -pb_.params.load.damping * x.sync - pb_.p_load.tail(nl_) - f.p.tail(nl_);
        o += nl_;
        r.segment(o, ng_) = x.excitation - ug -
                            gen.reactance_gap().cwiseProduct(f.q.head(ng_).cwiseQuotient(ug));
        o += ng_;
        r.segment(o, nl_) = -pb_.q_load - f.q.tail(nl_);
        o += nl_;
        r.segment(o, ng_) = -pb_.cost.gradient(x.p_gen) + Vec::Constant(ng_, x.price) -
                            Vec::Constant(ng_, x.sync) - drift_;
        o += ng_;
        double balance = x.p_gen.sum() - pb_.p_load.sum();
        if (pb_.mode == ControllerMode::lossy) {
            balance -= transmission_losses(theta, x.voltage, net);
        }
        r(o) = balance;
        return r;
    }

    // Columns: angles (n), voltage (n), excitation (ng), p_g (ng), price, sync.
    Mat full_jacobian(const Point& x) const
    {
        const auto& net = pb_.network;
        const auto& gen = pb_.params.gen;
        const Mat dt = net.incidence().transpose();
        const Vec theta = dt * x.angles;
        const PowerFlows f = power_flows(theta, x.voltage, net);
        const PowerFlowJacobian pj = power_flow_jacobian(theta, x.voltage, net);
        const Mat dp_da = pj.dp_dtheta * dt;
        const Mat dq_da = pj.dq_dtheta * dt;
        const Vec ug = x.voltage.head(ng_);
        const Vec gap = gen.reactance_gap();

        const int c_a = 0;
        const int c_u = n_;
        const int c_f = 2 * n_;
        const int c_p = 2 * n_ + ng_;
        const int c_l = c_p + ng_;
        const int c_w = c_l + 1;
        Mat j = Mat::Zero(num_unknowns(), c_w + 1);

        int o = 0;
        j.block(o, c_a, ng_, n_) = -dp_da.topRows(ng_);
        j.block(o, c_u, ng_, n_) = -pj.dp_dvoltage.topRows(ng_);
        j.block(o, c_p, ng_, ng_).setIdentity();
        j.block(o, c_w, ng_, 1) = -gen.damping;
        o += ng_;
        j.block(o, c_a, nl_, n_) = -dp_da.bottomRows(nl_);
        j.block(o, c_u, nl_, n_) = -pj.dp_dvoltage.bottomRows(nl_);
        j.block(o, c_w, nl_, 1) = -pb_.params.load.damping;
        o += nl_;
        for (int i = 0; i < ng_; ++i) {
            const double k = gap(i) / ug(i);
            j.block(o + i, c_a, 1, n_) = -k * dq_da.row(i);
            j.block(o + i, c_u, 1, n_) = -k * pj.dq_dvoltage.row(i);
            j(o + i, c_u + i) += -1.0 + gap(i) * f.q(i) / (ug(i) * ug(i));
            j(o + i, c_f + i) = 1.0;
        }
        o += ng_;
        j.block(o, c_a, nl_, n_) = -dq_da.bottomRows(nl_);
        j.block(o, c_u, nl_, n_) = -pj.dq_dvoltage.bottomRows(nl_);
        o += nl_;
        j.block(o, c_p, ng_, ng_) = -cost_hessian(x.p_gen);
        j.block(o, c_l, ng_, 1).setOnes();
        j.block(o, c_w, ng_, 1).setConstant(-1.0);
        o += ng_;
        j.block(o, c_p, 1, ng_).setOnes();
        if (pb_.mode == ControllerMode::lossy) {
            // The nodal active flows sum to the losses.
            j.block(o, c_a, 1, n_) -= dp_da.colwise().sum();
            j.block(o, c_u, 1, n_) -= pj.dp_dvoltage.colwise().sum();
        }
        return j;
    }

    std::vector<int> free_columns() const
    {
        std::vector<int> cols;
        for (int i = 0; i < n_; ++i) {
            if (i != pb_.reference_node) cols.push_back(i);
        }
        for (int i = 0; i < n_; ++i) {
            if (!(calibrate_ && i < ng_)) cols.push_back(n_ + i);
        }
        if (calibrate_) {
            for (int i = 0; i < ng_; ++i) cols.push_back(2 * n_ + i);
        }
        for (int i = 0; i < ng_ + 2; ++i) cols.push_back(2 * n_ + ng_ + i);
        return cols;
    }

    Point apply(const Point& x, const Vec& delta, double scale) const
    {
        Vec full = Vec::Zero(2 * n_ + 2 * ng_ + 2);
        const auto cols = free_columns();
        for (std::size_t k = 0; k < cols.size(); ++k) {
            full(cols[k]) = delta(static_cast<Eigen::Index>(k));
        }
        Point y = x;
        y.angles += scale * full.segment(0, n_);
        y.voltage += scale * full.segment(n_, n_);
        y.excitation += scale * full.segment(2 * n_, ng_);
        y.p_gen += scale * full.segment(2 * n_ + ng_, ng_);
        y.price += scale * full(2 * n_ + 2 * ng_);
        y.sync += scale * full(2 * n_ + 2 * ng_ + 1);
        return y;
    }

    Point flat_start() const
    {
        Point x;
        x.angles = Vec::Zero(n_);
        x.voltage = Vec::Ones(n_);
        if (calibrate_) {
            x.voltage.head(ng_).setConstant(pb_.target_voltage);
            x.excitation = Vec::Constant(ng_, pb_.target_voltage);
        } else {
            x.excitation = *pb_.excitation;
        }
        const double total = pb_.p_load.sum();
        if (pb_.cost.is_quadratic()) {
            const Vec& w = pb_.cost.weights();
            x.p_gen = w * (total / w.sum());
            x.price = total / w.sum();
        } else {
            x.p_gen = Vec::Constant(ng_, total / ng_);
            x.price = pb_.cost.gradient(x.p_gen).mean();
        }
        return x;
    }

private:
    Mat cost_hessian(const Vec& p_gen) const
    {
        if (pb_.cost.is_quadratic()) {
            return Mat(pb_.cost.weights().cwiseInverse().asDiagonal());
        }
        Mat h(ng_, ng_);
        const double eps = 1e-6;
        for (int k = 0; k < ng_; ++k) {
            Vec up = p_gen;
            Vec dn = p_gen;
            up(k) += eps;
            dn(k) -= eps;
            h.col(k) = (pb_.cost.gradient(up) - pb_.cost.gradient(dn)) / (2.0 * eps);
        }
        return h;
    }

    const EquilibriumProblem& pb_;
    int n_;
    int ng_;
    int nl_;
    bool calibrate_;
    Vec drift_;
};

void validate_problem(const EquilibriumProblem& pb)
{
    const int n = pb.network.num_nodes();
    const int ng = pb.network.num_generators();
    detail::require(pb.p_load.size() == n, "active demand needs one entry per node");
    detail::require(pb.q_load.size() == pb.network.num_loads(), "reactive demand needs one entry per load");
    detail::require(pb.drift.size() == 0 || pb.drift.size() == ng, "drift needs one entry per generator");
    detail::require(pb.cost.num_generators() == ng, "cost function does not match the generators");
    detail::require(pb.comm.num_nodes() == n, "communication graph does not match the network");
    detail::require(pb.comm.connected(), "equilibrium needs a connected communication graph");
    detail::require(pb.reference_node >= 0 && pb.reference_node < n, "reference node out of range");
    detail::require(pb.tol > 0.0 && pb.max_iterations > 0, "invalid Newton settings");
    if (pb.excitation) {
        detail::require(pb.excitation->size() == ng, "excitation needs one entry per generator");
    } else {
        detail::require(pb.target_voltage > 0.0, "target voltage must be positive");
    }
}

}  // namespace

EquilibriumSolution solve_equilibrium(const EquilibriumProblem& problem)
{
    validate_problem(problem);
    const SteadyState sys(problem);
    const auto cols = sys.free_columns();
    const int dim = sys.num_unknowns();

    Point x = sys.flat_start();
    Vec r = sys.residual(x);
    double norm = r.cwiseAbs().maxCoeff();
    int it = 0;
    while (!(norm < problem.tol)) {
        if (it >= problem.max_iterations || !std::isfinite(norm)) {
            std::ostringstream msg;
            msg << "no steady state found: Newton stopped after " << it << " iterations with residual "
                << norm;
            throw InfeasibleError(msg.str());
        }
        const Mat full = sys.full_jacobian(x);
        Mat j(dim, dim);
        for (int k = 0; k < dim; ++k) j.col(k) = full.col(cols[static_cast<std::size_t>(k)]);
        const auto lu = j.fullPivLu();
        if (!lu.isInvertible()) {
            throw InfeasibleError("no steady state found: singular Newton matrix");
        }
        const Vec delta = lu.solve(-r);

        // Backtrack on the residual norm, keeping every voltage positive.
        double scale = 1.0;
        Point trial = x;
        Vec rt = r;
        bool accepted = false;
        for (int k = 0; k < 30; ++k) {
            trial = sys.apply(x, delta, scale);
            if ((trial.voltage.array() > 0.0).all()) {
                rt = sys.residual(trial);
                if (rt.norm() < (1.0 - 1e-4 * scale) * r.norm() || rt.cwiseAbs().maxCoeff() < problem.tol) {
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!accepted) {
            throw InfeasibleError("no steady state found: line search failed");
        }
        x = trial;
        r = rt;
        norm = r.cwiseAbs().maxCoeff();
        ++it;
    }

    const auto& net = problem.network;
    const auto& gen = problem.params.gen;
    const int ng = net.num_generators();
    const int nl = net.num_loads();

    EquilibriumSolution sol;
    sol.iterations = it;
    sol.residual = norm;
    sol.angles = x.angles;
    sol.price = x.price;
    sol.sync_freq = x.sync;

    auto& ps = sol.state.plant;
    ps.theta = net.incidence().transpose() * x.angles;
    ps.momentum = gen.inertia * x.sync;
    ps.gen_voltage = x.voltage.head(ng);
    ps.load_freq = Vec::Constant(nl, x.sync);
    ps.load_voltage = x.voltage.tail(nl);

    const PowerFlows f = power_flows(ps.theta, x.voltage, net);
    sol.excitation = ps.gen_voltage +
                     gen.reactance_gap().cwiseProduct(f.q.head(ng).cwiseQuotient(ps.gen_voltage));

    const ConductanceTerms terms = conductance_terms(ps.theta, x.voltage, net, gen);
    const Vec phi = problem.mode == ControllerMode::lossy ? terms.phi : Vec::Zero(net.num_nodes());
    auto& cs = sol.state.ctrl;
    cs.p_gen = x.p_gen;
    cs.price = Vec::Constant(net.num_nodes(), x.price);
    cs.flow = min_norm_flows(problem.comm, x.p_gen, problem.p_load, phi);

    const PowerBalance pb = power_balance(x.p_gen, problem.p_load, ps.theta, x.voltage, net);
    sol.surplus = pb.surplus;
    sol.losses = pb.loss;

    Vec injected = -problem.p_load - phi;
    injected.head(ng) += x.p_gen;
    const double flow_residual = (problem.comm.incidence() * cs.flow - injected).cwiseAbs().maxCoeff();
    sol.residual = std::max(sol.residual, flow_residual);
    return sol;
}

Vec calibrate_excitation(EquilibriumProblem problem, double target)
{
    problem.excitation.reset();
    problem.target_voltage = target;
    return solve_equilibrium(problem).excitation;
}

PowerBalance power_balance(const Vec& p_gen, const Vec& p_load, const Vec& theta_diff,
                           const Vec& voltage, const Network& network)
{
    PowerBalance b;
    b.surplus = p_gen.sum() - p_load.sum();
    b.loss = transmission_losses(theta_diff, voltage, network);
    b.residual = b.surplus - b.loss;
    return b;
}

Vec min_norm_flows(const CommGraph& comm, const Vec& p_gen, const Vec& p_load, const Vec& phi)
{
    const int ng = static_cast<int>(p_gen.size());
    Vec rhs = -p_load - phi;
    rhs.head(ng) += p_gen;
    if (comm.num_edges() == 0) {
        return Vec::Zero(0);
    }
    return comm.incidence().completeOrthogonalDecomposition().solve(rhs);
}

ClosedLoopState reference_for(const ClosedLoopModel& reference_model, const CommGraph& comm,
                              const ClosedLoopState& reference)
{
    const auto& m = reference_model;
    ClosedLoopState x = reference;
    Vec phi = Vec::Zero(m.network.num_nodes());
    if (m.mode == ControllerMode::lossy) {
        phi = conductance_terms(x.plant.theta, x.plant.voltages(), m.network, m.params.gen).phi;
    }
    x.ctrl.flow = min_norm_flows(comm, x.ctrl.p_gen, m.p_load, phi);
    return x;
}

void write_equilibrium_report(std::ostream& out, const EquilibriumSolution& solution,
                              const EquilibriumProblem& problem)
{
    const auto& net = problem.network;
    const Vec u = solution.state.plant.voltages();
    const auto old_flags = out.flags();
    const auto old_precision = out.precision();
    out << std::setprecision(12);

    out << "node,kind,U,angle,p_g,lambda,p_load,U_f\n";
    for (int i = 0; i < net.num_nodes(); ++i) {
        const bool g = net.is_generator(i);
        out << net.id_of(i) << ',' << (g ? "generator" : "load") << ',' << u(i) << ','
            << solution.angles(i) << ',';
        if (g) out << solution.state.ctrl.p_gen(i);
        out << ',' << solution.state.ctrl.price(i) << ',' << problem.p_load(i) << ',';
        if (g) out << solution.excitation(i);
        out << '\n';
    }
    out << '\n';
    out << "quantity,value\n";
    out << "price," << solution.price << '\n';
    out << "sync_freq_pu," << solution.sync_freq << '\n';
    out << "sync_freq_hz," << pu_to_hz(solution.sync_freq) << '\n';
    out << "surplus," << solution.surplus << '\n';
    out << "losses," << solution.losses << '\n';
    out << "balance_residual," << solution.surplus - solution.losses << '\n';
    out << "iterations," << solution.iterations << '\n';
    out << "residual," << solution.residual << '\n';

    out.flags(old_flags);
    out.precision(old_precision);
}

}  // namespace pricegrid

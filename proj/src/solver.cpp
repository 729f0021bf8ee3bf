#include "ldisc/solver.hpp"

#include "ldisc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ldisc {

namespace {

using Eigen::Index;

// Below this reciprocal condition estimate a system is treated as singular.
constexpr double kSingularRcond = 1e-15;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Flattens an S x A matrix action-fastest.
Vector flatten_sa(const Matrix& m) {
    Vector out(m.size());
    const Index A = m.cols();
    for (Index s = 0; s < m.rows(); ++s)
        for (Index a = 0; a < A; ++a) out(s * A + a) = m(s, a);
    return out;
}

Matrix unflatten_sa(const Vector& v, Index S, Index A) {
    Matrix out(S, A);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) out(s, a) = v(s * A + a);
    return out;
}

// Everything that depends on the policy but not on lambda.
struct Context {
    Matrix T;     // (S*A) x S, terminal rows zeroed
    Matrix P;     // S x A, Phi * pi
    Matrix Tpi;   // S x S
    Matrix TPhi;  // (S*A) x O
    OccupancyWeights occ;
    Eigen::PartialPivLU<Matrix> occupancy_lu;
};

std::vector<bool> reachable_states(const Pomdp& p, const Matrix& T, const Matrix& P) {
    const std::size_t S = p.n_states(), A = p.n_actions();
    std::vector<bool> seen(S, false);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < S; ++s)
        if (p.p0()(idx(s)) > 0.0) {
            seen[s] = true;
            stack.push_back(s);
        }
    if (p.gamma() == 0.0) return seen;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        for (std::size_t a = 0; a < A; ++a) {
            if (P(idx(s), idx(a)) <= 0.0) continue;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                if (!seen[s2] && T(idx(s * A + a), idx(s2)) > 0.0) {
                    seen[s2] = true;
                    stack.push_back(s2);
                }
            }
        }
    }
    return seen;
}

Context make_context(const Pomdp& p, const Policy& pi) {
    require_compatible(p, pi);
    const Index S = idx(p.n_states()), A = idx(p.n_actions()), O = idx(p.n_obs());

    Context ctx;
    ctx.T = p.solve_transitions();
    ctx.P = p.phi() * pi.probs();
    ctx.Tpi = Matrix::Zero(S, S);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) ctx.Tpi.row(s) += ctx.P(s, a) * ctx.T.row(s * A + a);
    ctx.TPhi = ctx.T * p.phi();

    const Matrix C = Matrix::Identity(S, S) - p.gamma() * ctx.Tpi.transpose();
    ctx.occupancy_lu.compute(C);
    const double rcond = ctx.occupancy_lu.rcond();
    Vector c = ctx.occupancy_lu.solve(p.p0());
    if (!(rcond > kSingularRcond) || !c.allFinite())
        throw NonEpisodic("occupancy system is singular: policy does not terminate at gamma = 1");

    const auto reachable = reachable_states(p, ctx.T, ctx.P);
    for (Index s = 0; s < S; ++s)
        if (!reachable[static_cast<std::size_t>(s)] || c(s) < 0.0) c(s) = 0.0;

    OccupancyWeights& occ = ctx.occ;
    occ.state_occupancy = c;
    occ.obs_occupancy = p.phi().transpose() * c;
    occ.W = Matrix::Zero(O, S);
    occ.reachable_obs.assign(static_cast<std::size_t>(O), false);
    for (Index o = 0; o < O; ++o) {
        const double total = occ.obs_occupancy(o);
        if (total > 0.0) {
            occ.reachable_obs[static_cast<std::size_t>(o)] = true;
            for (Index s = 0; s < S; ++s) occ.W(o, s) = p.phi()(s, o) * c(s) / total;
        } else {
            occ.obs_occupancy(o) = 0.0;
            occ.W.row(o).setConstant(1.0 / static_cast<double>(S));
        }
    }
    return ctx;
}

// Solution of one lambda system.
//
// With T the (S*A) x S transition matrix and K the S x (S*A) policy spread,
// (I - gamma T K)^{-1} = I + gamma T (I - gamma K T)^{-1} K, so every solve
// reduces to an S x S system.
struct LambdaSolve {
    double lambda = 0.0;
    Matrix K;                          // S x (S*A)
    Eigen::PartialPivLU<Matrix> lu;    // I - gamma K T
    Vector B;                          // flattened S x A
    Matrix Q;                          // O x A
    double condition = 1.0;
    double gamma = 0.0;

    // y = (I - gamma T K)^{-T} g
    Vector adjoint(const Matrix& T, const Vector& g) const {
        const Vector rhs = T.transpose() * g;
        const Vector x = lu.transpose().solve(rhs);
        return g + gamma * (K.transpose() * x);
    }
};

// K = lambda Pi^S + (1 - lambda) Phi W^Pi, flattened S x (S*A).
Matrix policy_spread(const Pomdp& p, const Policy& pi, const Context& ctx, double lambda) {
    const Index S = idx(p.n_states()), A = idx(p.n_actions()), O = idx(p.n_obs());
    Matrix K = Matrix::Zero(S, S * A);
    if (lambda != 0.0) {
        for (Index s = 0; s < S; ++s)
            for (Index a = 0; a < A; ++a) K(s, s * A + a) = lambda * ctx.P(s, a);
    }
    if (lambda != 1.0) {
        Matrix G(O, S * A);  // W^Pi flattened over (s', a')
        for (Index o = 0; o < O; ++o)
            for (Index sp = 0; sp < S; ++sp)
                for (Index ap = 0; ap < A; ++ap)
                    G(o, sp * A + ap) = pi.probs()(o, ap) * ctx.occ.W(o, sp);
        K.noalias() += (1.0 - lambda) * (p.phi() * G);
    }
    return K;
}

LambdaSolve solve_lambda(const Pomdp& p, const Policy& pi, const Context& ctx, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw Error("lambda must lie in [0,1], got " + std::to_string(lambda));
    const Index S = idx(p.n_states()), A = idx(p.n_actions());
    LambdaSolve out;
    out.lambda = lambda;
    out.gamma = p.gamma();
    out.K = policy_spread(p, pi, ctx, lambda);
    Matrix system = -p.gamma() * (out.K * ctx.T);
    system.diagonal().array() += 1.0;
    out.lu.compute(system);
    const double rcond = out.lu.rcond();
    out.condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    const Vector r = flatten_sa(p.rewards());
    out.B = r + p.gamma() * (ctx.T * out.lu.solve(out.K * r));
    if (!(rcond > kSingularRcond) || !out.B.allFinite()) {
        std::ostringstream os;
        os << "I - gamma T K is singular at lambda " << lambda << " (condition estimate "
           << out.condition << ")";
        throw SolverSingular(os.str(), out.condition);
    }
    out.Q = ctx.occ.W * unflatten_sa(out.B, S, A);
    return out;
}

QTable to_qtable(const LambdaSolve& solve) {
    QTable q;
    q.values = solve.Q;
    q.lambda = solve.lambda;
    q.condition = solve.condition;
    if (solve.condition > kConditionWarning) {
        std::ostringstream os;
        os << "ill-conditioned solve at lambda " << solve.lambda << ": condition estimate "
           << solve.condition;
        q.warnings.push_back(os.str());
    }
    return q;
}

Matrix weights_for(const OccupancyWeights& occ, const Matrix& probs, NormKind norm) {
    const Index O = probs.rows();
    Matrix w = Matrix::Zero(O, probs.cols());
    const double total = occ.obs_occupancy.sum();
    for (Index o = 0; o < O; ++o) {
        if (!occ.reachable_obs[static_cast<std::size_t>(o)]) continue;
        const double obs_weight =
            norm == NormKind::PolicyWeightedL2 ? 1.0 : occ.obs_occupancy(o) / total;
        w.row(o) = obs_weight * probs.row(o);
    }
    return w;
}

}  // namespace

std::string to_string(NormKind kind) {
    switch (kind) {
        case NormKind::PolicyWeightedL2: return "policy_weighted_l2";
        case NormKind::OccupancyWeightedL2: return "occupancy_weighted_l2";
        case NormKind::OccupancyWeightedMax: return "occupancy_weighted_max";
    }
    return "unknown";
}

NormKind norm_from_string(const std::string& name) {
    if (name == "policy_weighted_l2" || name == "policy_l2" || name == "pi_l2")
        return NormKind::PolicyWeightedL2;
    if (name == "occupancy_weighted_l2" || name == "occupancy_l2" || name == "occ_l2")
        return NormKind::OccupancyWeightedL2;
    if (name == "occupancy_weighted_max" || name == "occupancy_max" || name == "max")
        return NormKind::OccupancyWeightedMax;
    throw Error("unknown norm '" + name + "'");
}

OccupancyWeights stationary_weights(const Pomdp& p, const Policy& pi) {
    return make_context(p, pi).occ;
}

QTable q_lambda(const Pomdp& p, const Policy& pi, double lambda) {
    const Context ctx = make_context(p, pi);
    return to_qtable(solve_lambda(p, pi, ctx, lambda));
}

VTable v_lambda(const Pomdp& p, const Policy& pi, double lambda) {
    const Context ctx = make_context(p, pi);
    const LambdaSolve solve = solve_lambda(p, pi, ctx, lambda);
    const Index O = idx(p.n_obs()), S = idx(p.n_states()), A = idx(p.n_actions());

    VTable v;
    v.lambda = lambda;
    v.values = (pi.probs().cwiseProduct(solve.Q)).rowwise().sum();

    // W^Pi : B, the double-contraction form.
    for (Index o = 0; o < O; ++o) {
        double direct = 0.0;
        for (Index s = 0; s < S; ++s)
            for (Index a = 0; a < A; ++a)
                direct += ctx.occ.W(o, s) * pi.probs()(o, a) * solve.B(s * A + a);
        if (std::abs(direct - v.values(o)) > 1e-8 * (1.0 + std::abs(direct)))
            throw NumericalFailure("V cross-check failed at observation " + std::to_string(o),
                                   static_cast<std::size_t>(o));
    }
    return v;
}

EffectiveMdp effective_mdp(const Pomdp& p, const Policy& pi) {
    const Context ctx = make_context(p, pi);
    const Index O = idx(p.n_obs()), S = idx(p.n_states()), A = idx(p.n_actions());
    EffectiveMdp mdp;
    mdp.gamma = p.gamma();
    mdp.reachable_obs = ctx.occ.reachable_obs;
    mdp.T_obs = Tensor3({p.n_obs(), p.n_actions(), p.n_obs()});
    mdp.R_obs = Matrix::Zero(O, A);
    for (Index o = 0; o < O; ++o) {
        for (Index a = 0; a < A; ++a) {
            for (Index s = 0; s < S; ++s) {
                const double w = ctx.occ.W(o, s);
                if (w == 0.0) continue;
                mdp.R_obs(o, a) += w * p.rewards()(s, a);
                for (Index o2 = 0; o2 < O; ++o2) mdp.T_obs(o, a, o2) += w * ctx.TPhi(s * A + a, o2);
            }
        }
    }
    return mdp;
}

Matrix evaluate_mdp_q(const Tensor3& T_obs, const Matrix& R_obs, const Policy& pi, double gamma) {
    const Index O = R_obs.rows(), A = R_obs.cols();
    Matrix system = Matrix::Identity(O * A, O * A);
    for (Index o = 0; o < O; ++o)
        for (Index a = 0; a < A; ++a)
            for (Index o2 = 0; o2 < O; ++o2) {
                const double t = T_obs(o, a, o2);
                if (t == 0.0) continue;
                for (Index a2 = 0; a2 < A; ++a2)
                    system(o * A + a, o2 * A + a2) -= gamma * t * pi.probs()(o2, a2);
            }
    Eigen::PartialPivLU<Matrix> lu(system);
    if (!(lu.rcond() > kSingularRcond))
        throw SolverSingular("effective MDP evaluation is singular", 1.0 / lu.rcond());
    return unflatten_sa(lu.solve(flatten_sa(R_obs)), O, A);
}

Matrix discrepancy_weights(const OccupancyWeights& occ, const Policy& pi, NormKind norm) {
    return weights_for(occ, pi.probs(), norm);
}

double lambda_discrepancy(const Pomdp& p, const Policy& pi, const DiscrepancySpec& spec) {
    return discrepancy_adjoint(p, pi, spec).discrepancy;
}

Matrix state_q_values(const Pomdp& p, const Policy& pi) {
    const Context ctx = make_context(p, pi);
    const Index S = idx(p.n_states()), A = idx(p.n_actions());
    Matrix system = Matrix::Identity(S, S) - p.gamma() * ctx.Tpi;
    Eigen::PartialPivLU<Matrix> lu(system);
    const Vector reward_pi = (ctx.P.cwiseProduct(p.rewards())).rowwise().sum();
    const Vector v = lu.solve(reward_pi);
    Matrix q(S, A);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            q(s, a) = p.rewards()(s, a) + p.gamma() * ctx.T.row(s * A + a).dot(v);
    return q;
}

double start_value(const Pomdp& p, const Policy& pi) {
    return start_value_gradient(p, pi).value;
}

StartValueGradient start_value_gradient(const Pomdp& p, const Policy& pi) {
    const Context ctx = make_context(p, pi);
    const Index S = idx(p.n_states()), A = idx(p.n_actions());
    const Vector& c = ctx.occ.state_occupancy;

    // V_S = (I - gamma T_pi)^{-1} r_pi; the occupancy LU holds the transpose.
    const Vector reward_pi = (ctx.P.cwiseProduct(p.rewards())).rowwise().sum();
    const Vector v = ctx.occupancy_lu.transpose().solve(reward_pi);

    StartValueGradient out;
    out.value = p.p0().dot(v);
    // dJ/dP(s, a) = c(s) Q_S(s, a); chain through P = Phi pi.
    Matrix grad_P(S, A);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            grad_P(s, a) =
                c(s) * (p.rewards()(s, a) + p.gamma() * ctx.T.row(s * A + a).dot(v));
    out.grad_probs = p.phi().transpose() * grad_P;
    return out;
}

DiscrepancyAdjoint discrepancy_adjoint(const Pomdp& p, const Policy& pi,
                                       const DiscrepancySpec& spec) {
    const Context ctx = make_context(p, pi);
    const Index S = idx(p.n_states()), A = idx(p.n_actions()), O = idx(p.n_obs());
    const double gamma = p.gamma();
    const OccupancyWeights& occ = ctx.occ;

    LambdaSolve first = solve_lambda(p, pi, ctx, spec.lambda1);
    LambdaSolve second = solve_lambda(p, pi, ctx, spec.lambda2);
    const Matrix delta = first.Q - second.Q;

    DiscrepancyAdjoint out;
    out.grad_transitions = Matrix::Zero(S * A, S);
    const Matrix weights = weights_for(occ, pi.probs(), spec.norm);
    Matrix grad_Q = Matrix::Zero(O, A);  // d objective / d Q^{lambda1}
    Vector grad_obs_occ = Vector::Zero(O);

    if (spec.norm == NormKind::OccupancyWeightedMax) {
        double best = 0.0;
        Index bo = -1, ba = -1;
        for (Index o = 0; o < O; ++o)
            for (Index a = 0; a < A; ++a)
                if (weights(o, a) > 0.0 && std::abs(delta(o, a)) > best) {
                    best = std::abs(delta(o, a));
                    bo = o;
                    ba = a;
                }
        out.discrepancy = best;
        out.squared = best * best;
        if (bo >= 0) grad_Q(bo, ba) = 2.0 * delta(bo, ba);
    } else {
        out.squared = weights.cwiseProduct(delta.cwiseProduct(delta)).sum();
        out.discrepancy = std::sqrt(std::max(out.squared, 0.0));
        grad_Q = 2.0 * weights.cwiseProduct(delta);
        if (spec.norm == NormKind::OccupancyWeightedL2) {
            // objective = sum_o (occ(o) / sum occ) g(o)
            const double total = occ.obs_occupancy.sum();
            Vector g = Vector::Zero(O);
            for (Index o = 0; o < O; ++o)
                if (occ.reachable_obs[static_cast<std::size_t>(o)])
                    g(o) = pi.probs().row(o).dot(delta.row(o).cwiseProduct(delta.row(o)));
            const double mean = occ.obs_occupancy.dot(g) / total;
            for (Index o = 0; o < O; ++o)
                if (occ.reachable_obs[static_cast<std::size_t>(o)])
                    grad_obs_occ(o) = (g(o) - mean) / total;
        }
    }
    if (spec.lambda1 == spec.lambda2) return out;  // objective is identically zero

    Matrix grad_W = Matrix::Zero(O, S);
    Matrix& grad_T = out.grad_transitions;
    const auto backprop = [&](const LambdaSolve& solve, const Matrix& gQ) {
        const Matrix B = unflatten_sa(solve.B, S, A);
        grad_W.noalias() += gQ * B.transpose();
        const Vector gB = flatten_sa(occ.W.transpose() * gQ);
        const Vector y = solve.adjoint(ctx.T, gB);
        const double lambda = solve.lambda;
        if (lambda != 0.0) {
            const Vector vP = (ctx.P.cwiseProduct(B)).rowwise().sum();  // S
            grad_T.noalias() += (gamma * lambda) * y * vP.transpose();
        }
        if (lambda != 1.0) {
            const Matrix piB = pi.probs() * B.transpose();             // O x S: sum_a' pi(o,a') B(s',a')
            const Vector h = (occ.W.cwiseProduct(piB)).rowwise().sum();  // O
            const double scale = gamma * (1.0 - lambda);
            grad_T.noalias() += scale * y * (p.phi() * h).transpose();
            const Vector TPhi_y = ctx.TPhi.transpose() * y;  // O
            grad_W.noalias() += scale * TPhi_y.asDiagonal() * piB;
        }
    };
    backprop(first, grad_Q);
    backprop(second, -grad_Q);

    // W(o, s) = Phi(s, o) c(s) / occ(o)
    const Vector& c = occ.state_occupancy;
    Vector grad_c = p.phi() * grad_obs_occ;
    for (Index o = 0; o < O; ++o) {
        if (!occ.reachable_obs[static_cast<std::size_t>(o)]) continue;
        const double inner = grad_W.row(o).dot(occ.W.row(o));
        const double total = occ.obs_occupancy(o);
        for (Index s = 0; s < S; ++s)
            grad_c(s) += p.phi()(s, o) * (grad_W(o, s) - inner) / total;
    }

    // c = (I - gamma T_pi^T)^{-1} p0
    const Vector z = ctx.occupancy_lu.transpose().solve(grad_c);
    for (Index s = 0; s < S; ++s) {
        if (c(s) == 0.0) continue;
        for (Index a = 0; a < A; ++a) {
            const double coef = gamma * ctx.P(s, a) * c(s);
            if (coef != 0.0) grad_T.row(s * A + a) += coef * z.transpose();
        }
    }

    for (std::size_t s = 0; s < p.n_states(); ++s)
        if (p.terminal()[s]) grad_T.middleRows(idx(s) * A, A).setZero();
    return out;
}

}  // namespace ldisc

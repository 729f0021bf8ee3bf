#pragma once

// Reference computations written directly from the definitions, with loops
// instead of factorizations. They share nothing with the solver beyond the
// model accessors.

#include "ldisc/model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using ldisc::Matrix;
using ldisc::Pomdp;
using ldisc::Policy;
using ldisc::Vector;

// T(s, a, s') with the rows of terminal states removed.
inline double T(const Pomdp& p, std::size_t s, std::size_t a, std::size_t s2) {
    return p.terminal()[s] ? 0.0 : p.T(s, a, s2);
}

// pi_S(s, a) = sum_o Phi(s, o) pi(a | o)
inline Matrix state_policy(const Pomdp& p, const Policy& pi) {
    Matrix out = Matrix::Zero(p.n_states(), p.n_actions());
    for (std::size_t s = 0; s < p.n_states(); ++s)
        for (std::size_t o = 0; o < p.n_obs(); ++o)
            for (std::size_t a = 0; a < p.n_actions(); ++a) out(s, a) += p.phi()(s, o) * pi(o, a);
    return out;
}

// sum_t gamma^t Pr(s_t = s), propagated until gamma^t drops below tol.
inline Vector occupancy_series(const Pomdp& p, const Policy& pi, double tol = 1e-15,
                               std::size_t max_steps = 1000000) {
    const std::size_t S = p.n_states(), A = p.n_actions();
    const Matrix ps = state_policy(p, pi);
    Vector d = p.p0(), total = Vector::Zero(S);
    double g = 1.0;
    for (std::size_t t = 0; t < max_steps && (g > tol || p.gamma() == 1.0); ++t) {
        total += g * d;
        Vector next = Vector::Zero(S);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t s2 = 0; s2 < S; ++s2) next(s2) += d(s) * ps(s, a) * T(p, s, a, s2);
        d = next;
        g *= p.gamma();
        if (p.gamma() == 1.0 && d.sum() < tol) break;
    }
    return total;
}

// Pr(s | o) from an occupancy vector; uniform rows where o is never seen.
inline Matrix weights_from(const Pomdp& p, const Vector& c) {
    const std::size_t S = p.n_states(), O = p.n_obs();
    Matrix W = Matrix::Zero(O, S);
    for (std::size_t o = 0; o < O; ++o) {
        double total = 0.0;
        for (std::size_t s = 0; s < S; ++s) total += p.phi()(s, o) * c(s);
        for (std::size_t s = 0; s < S; ++s)
            W(o, s) = total > 0.0 ? p.phi()(s, o) * c(s) / total : 1.0 / static_cast<double>(S);
    }
    return W;
}

// Q^lambda as the projected Neumann series sum_k (gamma T K)^k R, adding
// terms until the largest one falls below tol.
inline Matrix neumann_q(const Pomdp& p, const Policy& pi, double lambda, const Matrix& W,
                        double tol = 1e-13, std::size_t max_terms = 200000) {
    const std::size_t S = p.n_states(), A = p.n_actions(), O = p.n_obs();
    const Matrix ps = state_policy(p, pi);
    Matrix term = p.rewards(), sum = p.rewards();
    for (std::size_t k = 0; k < max_terms && term.cwiseAbs().maxCoeff() > tol; ++k) {
        // (K x)(s', a') = lambda pi_S(s', a') x(s', a')
        //   + (1 - lambda) sum_o Phi(s', o) pi(a' | o) sum_s'' W(o, s'') x(s'', a')
        Matrix blended = Matrix::Zero(O, A);
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t s = 0; s < S; ++s) blended(o, a) += W(o, s) * term(s, a);
        Vector cont = Vector::Zero(S);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                double mc = ps(s, a) * term(s, a), td = 0.0;
                for (std::size_t o = 0; o < O; ++o) td += p.phi()(s, o) * pi(o, a) * blended(o, a);
                cont(s) += lambda * mc + (1.0 - lambda) * td;
            }
        Matrix next = Matrix::Zero(S, A);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t s2 = 0; s2 < S; ++s2) next(s, a) += p.gamma() * T(p, s, a, s2) * cont(s2);
        term = next;
        sum += term;
    }
    return W * sum;
}

// Q of an MDP by repeated Bellman backups until the change is below tol.
inline Matrix value_iteration_q(const Pomdp& p, const Matrix& pi_state, double tol = 1e-13) {
    const std::size_t S = p.n_states(), A = p.n_actions();
    Matrix q = Matrix::Zero(S, A);
    for (int it = 0; it < 1000000; ++it) {
        Matrix next = p.rewards();
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t s2 = 0; s2 < S; ++s2) {
                    const double t = T(p, s, a, s2);
                    if (t == 0.0) continue;
                    double v = 0.0;
                    for (std::size_t a2 = 0; a2 < A; ++a2) v += pi_state(s2, a2) * q(s2, a2);
                    next(s, a) += p.gamma() * t * v;
                }
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = next;
        if (change < tol) break;
    }
    return q;
}

// Optimal state values by value iteration over deterministic actions.
inline Vector optimal_values(const Pomdp& p, double tol = 1e-13) {
    const std::size_t S = p.n_states(), A = p.n_actions();
    Vector v = Vector::Zero(S);
    for (int it = 0; it < 1000000; ++it) {
        Vector next(S);
        for (std::size_t s = 0; s < S; ++s) {
            double best = -1e300;
            for (std::size_t a = 0; a < A; ++a) {
                double q = p.rewards()(s, a);
                for (std::size_t s2 = 0; s2 < S; ++s2) q += p.gamma() * T(p, s, a, s2) * v(s2);
                best = std::max(best, q);
            }
            next(s) = best;
        }
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (change < tol) break;
    }
    return v;
}

}  // namespace oracle

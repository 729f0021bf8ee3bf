#pragma once

// Direct (S*A) x (S*A) evaluation of the memory and policy objectives in
// extended precision. Used by the finite-difference checkers: at h = 1e-5 the
// rounding noise of double evaluation is comparable to small gradient
// entries.

#include "ldisc/memory.hpp"
#include "ldisc/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ldisc::detail {

using Real = long double;
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct ExtendedModel {
    RMatrix T;    // (S*A) x S, terminal rows zeroed
    RMatrix R;    // S x A
    RMatrix phi;  // S x O
    RVector p0;
    Real gamma = 0;
};

inline RMatrix softmax_rows(const RMatrix& logits) {
    RMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Real mx = logits.row(r).maxCoeff();
        for (Eigen::Index c = 0; c < logits.cols(); ++c) out(r, c) = std::exp(logits(r, c) - mx);
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

inline ExtendedModel extended_model(const Pomdp& p) {
    ExtendedModel m;
    m.T = p.solve_transitions().cast<Real>();
    m.R = p.rewards().cast<Real>();
    m.phi = p.phi().cast<Real>();
    m.p0 = p.p0().cast<Real>();
    m.gamma = p.gamma();
    return m;
}

// Memory-augmented model with memory logits given as (O*A*M) x M rows.
inline ExtendedModel extended_augment(const Pomdp& p, std::size_t n_mem,
                                      const std::vector<Real>& logits) {
    const Eigen::Index S = static_cast<Eigen::Index>(p.n_states());
    const Eigen::Index A = static_cast<Eigen::Index>(p.n_actions());
    const Eigen::Index O = static_cast<Eigen::Index>(p.n_obs());
    const Eigen::Index M = static_cast<Eigen::Index>(n_mem);
    RMatrix raw(O * A * M, M);
    for (Eigen::Index r = 0; r < raw.rows(); ++r)
        for (Eigen::Index c = 0; c < M; ++c) raw(r, c) = logits[static_cast<std::size_t>(r * M + c)];
    const RMatrix probs = softmax_rows(raw);
    const RMatrix T = p.solve_transitions().cast<Real>();

    ExtendedModel m;
    m.T = RMatrix::Zero(S * M * A, S * M);
    m.R = RMatrix(S * M, A);
    m.phi = RMatrix::Zero(S * M, O * M);
    m.p0 = RVector::Zero(S * M);
    m.gamma = p.gamma();
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index k = 0; k < M; ++k) {
            const Eigen::Index sm = s * M + k;
            m.R.row(sm) = p.rewards().row(s).cast<Real>();
            for (Eigen::Index o = 0; o < O; ++o) m.phi(sm, o * M + k) = p.phi()(s, o);
            for (Eigen::Index a = 0; a < A; ++a)
                for (Eigen::Index k2 = 0; k2 < M; ++k2) {
                    Real update = 0;
                    for (Eigen::Index o = 0; o < O; ++o)
                        update += Real(p.phi()(s, o)) * probs((o * A + a) * M + k, k2);
                    if (M == 1) update = 1;
                    for (Eigen::Index s2 = 0; s2 < S; ++s2)
                        m.T((sm)*A + a, s2 * M + k2) = T(s * A + a, s2) * update;
                }
        }
    for (Eigen::Index s = 0; s < S; ++s) m.p0(s * M) = p.p0()(s);
    return m;
}

struct ExtendedOccupancy {
    RVector c;
    RVector obs;
    RMatrix W;
    std::vector<bool> reachable;
};

inline ExtendedOccupancy extended_occupancy(const ExtendedModel& m, const RMatrix& pi) {
    const Eigen::Index S = m.R.rows(), A = m.R.cols(), O = m.phi.cols();
    const RMatrix P = m.phi * pi;
    RMatrix Tpi = RMatrix::Zero(S, S);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) Tpi.row(s) += P(s, a) * m.T.row(s * A + a);
    const RMatrix C = RMatrix::Identity(S, S) - m.gamma * Tpi.transpose();
    ExtendedOccupancy out;
    out.c = C.partialPivLu().solve(m.p0);

    // Reachability from the start support, as in the double-precision solver.
    std::vector<bool> seen(static_cast<std::size_t>(S), false);
    std::vector<Eigen::Index> stack;
    for (Eigen::Index s = 0; s < S; ++s)
        if (m.p0(s) > 0) {
            seen[static_cast<std::size_t>(s)] = true;
            stack.push_back(s);
        }
    if (m.gamma != 0) {
        while (!stack.empty()) {
            const Eigen::Index s = stack.back();
            stack.pop_back();
            for (Eigen::Index a = 0; a < A; ++a) {
                if (!(P(s, a) > 0)) continue;
                for (Eigen::Index s2 = 0; s2 < S; ++s2)
                    if (!seen[static_cast<std::size_t>(s2)] && m.T(s * A + a, s2) > 0) {
                        seen[static_cast<std::size_t>(s2)] = true;
                        stack.push_back(s2);
                    }
            }
        }
    }
    for (Eigen::Index s = 0; s < S; ++s)
        if (!seen[static_cast<std::size_t>(s)] || out.c(s) < 0) out.c(s) = 0;

    out.obs = m.phi.transpose() * out.c;
    out.W = RMatrix::Zero(O, S);
    out.reachable.assign(static_cast<std::size_t>(O), false);
    for (Eigen::Index o = 0; o < O; ++o) {
        if (out.obs(o) > 0) {
            out.reachable[static_cast<std::size_t>(o)] = true;
            for (Eigen::Index s = 0; s < S; ++s) out.W(o, s) = m.phi(s, o) * out.c(s) / out.obs(o);
        } else {
            out.obs(o) = 0;
            out.W.row(o).setConstant(Real(1) / Real(S));
        }
    }
    return out;
}

// Q^lambda from the unreduced (S*A) x (S*A) system.
inline RMatrix extended_q(const ExtendedModel& m, const RMatrix& pi, const ExtendedOccupancy& occ,
                          Real lambda) {
    const Eigen::Index S = m.R.rows(), A = m.R.cols(), O = m.phi.cols();
    const RMatrix P = m.phi * pi;
    RMatrix K = RMatrix::Zero(S, S * A);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) K(s, s * A + a) += lambda * P(s, a);
    RMatrix G(O, S * A);
    for (Eigen::Index o = 0; o < O; ++o)
        for (Eigen::Index s = 0; s < S; ++s)
            for (Eigen::Index a = 0; a < A; ++a) G(o, s * A + a) = pi(o, a) * occ.W(o, s);
    K += (1 - lambda) * (m.phi * G);
    const RMatrix system = RMatrix::Identity(S * A, S * A) - m.gamma * (m.T * K);
    RVector r(S * A);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) r(s * A + a) = m.R(s, a);
    const RVector B = system.partialPivLu().solve(r);
    RMatrix Bm(S, A);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) Bm(s, a) = B(s * A + a);
    return occ.W * Bm;
}

inline Real extended_squared_discrepancy(const ExtendedModel& m, const RMatrix& pi,
                                         const DiscrepancySpec& spec) {
    const ExtendedOccupancy occ = extended_occupancy(m, pi);
    const RMatrix delta =
        extended_q(m, pi, occ, spec.lambda1) - extended_q(m, pi, occ, spec.lambda2);
    const Real total = occ.obs.sum();
    Real out = 0;
    for (Eigen::Index o = 0; o < delta.rows(); ++o) {
        if (!occ.reachable[static_cast<std::size_t>(o)]) continue;
        const Real obs_weight =
            spec.norm == NormKind::PolicyWeightedL2 ? Real(1) : occ.obs(o) / total;
        for (Eigen::Index a = 0; a < delta.cols(); ++a) {
            const Real w = obs_weight * pi(o, a);
            if (spec.norm == NormKind::OccupancyWeightedMax) {
                if (w > 0) out = std::max(out, delta(o, a) * delta(o, a));
            } else {
                out += w * delta(o, a) * delta(o, a);
            }
        }
    }
    return out;
}

inline Real extended_start_value(const ExtendedModel& m, const RMatrix& pi) {
    const Eigen::Index S = m.R.rows(), A = m.R.cols();
    const RMatrix P = m.phi * pi;
    RMatrix Tpi = RMatrix::Zero(S, S);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) Tpi.row(s) += P(s, a) * m.T.row(s * A + a);
    const RVector r_pi = P.cwiseProduct(m.R).rowwise().sum();
    const RVector v = (RMatrix::Identity(S, S) - m.gamma * Tpi).partialPivLu().solve(r_pi);
    return m.p0.dot(v);
}

}  // namespace ldisc::detail

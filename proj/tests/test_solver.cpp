#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/sampler.hpp"
#include "ldisc/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ldisc;

namespace {

constexpr std::size_t kBlue = 0, kRight = 2;

std::vector<PomdpSource> small_environments() {
    std::vector<PomdpSource> envs;
    for (const auto& name : fixture_names()) envs.push_back(fixture(name));
    envs.push_back(tmaze());
    envs.push_back(parity_check());
    envs.push_back(tk_equality());
    return envs;
}

}  // namespace

TEST(Solver, TmazeGoldenValues) {
    const Pomdp p = tmaze(5, 1.0).pomdp;
    const Policy pi = tmaze_right_then_up_policy();
    EXPECT_NEAR(q_lambda(p, pi, 1.0).values(kBlue, kRight), 4.0, 1e-10);
    EXPECT_NEAR(q_lambda(p, pi, 0.0).values(kBlue, kRight), 1.95, 1e-10);
    // start value: the episode always walks to the junction and goes up
    EXPECT_NEAR(start_value(p, pi), 0.5 * 4.0 + 0.5 * -0.1, 1e-10);
}

TEST(Solver, TmazeFullyObservableMatchesValueIteration) {
    const Pomdp p = tmaze_fully_observable(5, 0.9).pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 21);
    const Matrix expect = oracle::value_iteration_q(p, oracle::state_policy(p, pi));
    for (double lambda : {0.0, 0.5, 1.0}) {
        const QTable q = q_lambda(p, pi, lambda);
        EXPECT_LT((q.values - expect).cwiseAbs().maxCoeff(), 1e-9) << lambda;
    }
}

TEST(Solver, OccupancyMatchesPropagation) {
    for (const auto& env : small_environments()) {
        SCOPED_TRACE(env.name);
        const Pomdp& p = env.pomdp;
        const Policy pi = random_policy(p.n_obs(), p.n_actions(), 4);
        const OccupancyWeights occ = stationary_weights(p, pi);
        const Vector series = oracle::occupancy_series(p, pi);
        EXPECT_LT((occ.state_occupancy - series).cwiseAbs().maxCoeff(), 1e-9);
        const Vector truncated = propagate_occupancy(p, pi, 2000);
        EXPECT_LT((occ.state_occupancy - truncated).cwiseAbs().maxCoeff(), 1e-9);
        const Matrix W = oracle::weights_from(p, series);
        EXPECT_LT((occ.W - W).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Solver, ClosedFormMatchesNeumannSeries) {
    for (const auto& env : small_environments()) {
        SCOPED_TRACE(env.name);
        const Pomdp& p = env.pomdp;
        const Policy pi = random_policy(p.n_obs(), p.n_actions(), 8);
        const Matrix W = oracle::weights_from(p, oracle::occupancy_series(p, pi));
        for (double lambda : {0.0, 0.3, 0.7, 1.0}) {
            const Matrix series = oracle::neumann_q(p, pi, lambda, W);
            const QTable q = q_lambda(p, pi, lambda);
            EXPECT_LT((q.values - series).cwiseAbs().maxCoeff(), 1e-8) << "lambda " << lambda;
            EXPECT_DOUBLE_EQ(q.lambda, lambda);
            EXPECT_GE(q.condition, 1.0);
        }
    }
}

TEST(Solver, MonteCarloEqualsStateValuesProjected) {
    // Q^1 = W Q_S for every POMDP.
    for (const auto& env : small_environments()) {
        SCOPED_TRACE(env.name);
        const Pomdp& p = env.pomdp;
        const Policy pi = random_policy(p.n_obs(), p.n_actions(), 2);
        const Matrix qs = state_q_values(p, pi);
        const OccupancyWeights occ = stationary_weights(p, pi);
        EXPECT_LT((q_lambda(p, pi, 1.0).values - occ.W * qs).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(start_value(p, pi), p.p0().dot((qs.cwiseProduct(oracle::state_policy(p, pi))).rowwise().sum()),
                    1e-9);
    }
}

TEST(Solver, VLambdaAveragesQ) {
    const Pomdp p = tmaze().pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 5);
    for (double lambda : {0.0, 0.6, 1.0}) {
        const QTable q = q_lambda(p, pi, lambda);
        const VTable v = v_lambda(p, pi, lambda);
        for (std::size_t o = 0; o < p.n_obs(); ++o)
            EXPECT_NEAR(v.values(o), q.values.row(o).dot(pi.probs().row(o)), 1e-12);
    }
}

TEST(Solver, BlockMdpHasNoDiscrepancy) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Pomdp p = random_block_mdp(6, 3, 2, seed).pomdp;
        for (std::uint64_t k = 0; k < 5; ++k) {
            const Policy pi = random_policy(p.n_obs(), p.n_actions(), k);
            EXPECT_LE(lambda_discrepancy(p, pi, {}), 1e-8);
        }
    }
}

TEST(Solver, DiscrepancyMatchesOracleNorm) {
    const Pomdp p = fixture("tiger").pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 3);
    const Vector c = oracle::occupancy_series(p, pi);
    const Matrix W = oracle::weights_from(p, c);
    const Matrix d = oracle::neumann_q(p, pi, 0.0, W) - oracle::neumann_q(p, pi, 1.0, W);
    const Vector obs_occ = p.phi().transpose() * c;

    double pol = 0.0, occ = 0.0, mx = 0.0;
    for (std::size_t o = 0; o < p.n_obs(); ++o)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            if (obs_occ(o) <= 0.0) continue;
            pol += pi(o, a) * d(o, a) * d(o, a);
            occ += obs_occ(o) / obs_occ.sum() * pi(o, a) * d(o, a) * d(o, a);
            mx = std::max(mx, std::abs(d(o, a)));
        }
    EXPECT_NEAR(lambda_discrepancy(p, pi, {0, 1, NormKind::PolicyWeightedL2}), std::sqrt(pol), 1e-8);
    EXPECT_NEAR(lambda_discrepancy(p, pi, {0, 1, NormKind::OccupancyWeightedL2}), std::sqrt(occ), 1e-8);
    EXPECT_NEAR(lambda_discrepancy(p, pi, {0, 1, NormKind::OccupancyWeightedMax}), mx, 1e-8);
}

TEST(Solver, NormProperties) {
    const Pomdp p = tmaze().pomdp;
    for (std::uint64_t k = 0; k < 10; ++k) {
        const Policy pi = random_policy(p.n_obs(), p.n_actions(), k);
        for (NormKind norm : {NormKind::PolicyWeightedL2, NormKind::OccupancyWeightedL2,
                              NormKind::OccupancyWeightedMax}) {
            const double a = lambda_discrepancy(p, pi, {0.0, 1.0, norm});
            EXPECT_GE(a, 0.0);
            EXPECT_NEAR(a, lambda_discrepancy(p, pi, {1.0, 0.0, norm}), 1e-12);
            EXPECT_EQ(lambda_discrepancy(p, pi, {0.4, 0.4, norm}), 0.0);
        }
        // occupancy weights sum to one, so the weighted L2 is bounded by the max
        EXPECT_LE(lambda_discrepancy(p, pi, {0, 1, NormKind::OccupancyWeightedL2}),
                  lambda_discrepancy(p, pi, {0, 1, NormKind::OccupancyWeightedMax}) + 1e-12);
    }
}

TEST(Solver, NormNamesRoundTrip) {
    for (NormKind norm : {NormKind::PolicyWeightedL2, NormKind::OccupancyWeightedL2,
                          NormKind::OccupancyWeightedMax})
        EXPECT_EQ(norm_from_string(to_string(norm)), norm);
    EXPECT_THROW(norm_from_string("l7"), Error);
}

TEST(Solver, UnreachableObservationsGetUniformWeights) {
    // the fully observable T-maze never shows the red start under a policy
    // started from blue only
    Pomdp p = tmaze_fully_observable().pomdp;
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(p.n_states()));
    p0(0) = 1.0;
    p = p.with_p0(p0);
    const Policy pi = Policy::uniform(p.n_obs(), p.n_actions());
    const OccupancyWeights occ = stationary_weights(p, pi);
    EXPECT_FALSE(occ.reachable_obs[1]);
    EXPECT_NEAR(occ.W.row(1).sum(), 1.0, 1e-12);
    EXPECT_NEAR(occ.W(1, 0), 1.0 / static_cast<double>(p.n_states()), 1e-15);
    const Matrix w = discrepancy_weights(occ, pi, NormKind::PolicyWeightedL2);
    EXPECT_EQ(w.row(1).sum(), 0.0);
}

TEST(Solver, TkEqualityEffectiveMdpReproducesMonteCarlo) {
    const Pomdp p = tk_equality().pomdp;
    for (std::uint64_t k = 0; k < 10; ++k) {
        const Policy pi = random_policy(p.n_obs(), p.n_actions(), k);
        EXPECT_LE(lambda_discrepancy(p, pi, {}), 1e-8);
        const EffectiveMdp eff = effective_mdp(p, pi);
        const Matrix td = evaluate_mdp_q(eff.T_obs, eff.R_obs, pi, eff.gamma);
        const Matrix mc = q_lambda(p, pi, 1.0).values;
        for (std::size_t o = 0; o < p.n_obs(); ++o) {
            if (!eff.reachable_obs[o]) continue;
            for (std::size_t a = 0; a < p.n_actions(); ++a) EXPECT_NEAR(td(o, a), mc(o, a), 1e-8);
        }
    }
}

TEST(Solver, EffectiveMdpTdMatchesLambdaZero) {
    // TD(0) on the POMDP is policy evaluation on the effective MDP.
    const Pomdp p = tmaze().pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 6);
    const EffectiveMdp eff = effective_mdp(p, pi);
    const Matrix td = evaluate_mdp_q(eff.T_obs, eff.R_obs, pi, eff.gamma);
    const Matrix q0 = q_lambda(p, pi, 0.0).values;
    for (std::size_t o = 0; o < p.n_obs(); ++o)
        if (eff.reachable_obs[o]) { EXPECT_LT((td.row(o) - q0.row(o)).cwiseAbs().maxCoeff(), 1e-9); }
}

TEST(Solver, GammaOneEpisodicSolves) {
    const Pomdp p = parity_check(ParityOptions{1.0, 0.0, 0.0}).pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 1);
    EXPECT_NO_THROW(q_lambda(p, pi, 0.5));
}

TEST(Solver, GammaOneNonEpisodicFails) {
    // a self-loop that never terminates
    Matrix T(1, 1);
    T << 1.0;
    Matrix R(1, 1);
    R << 1.0;
    const Pomdp p(T, R, Matrix::Identity(1, 1), Vector::Ones(1), 1.0, {false});
    EXPECT_THROW(q_lambda(p, Policy::uniform(1, 1), 0.0), NonEpisodic);
}

TEST(Solver, CompatibilityEnforced) {
    const Pomdp p = tmaze().pomdp;
    EXPECT_THROW(q_lambda(p, Policy::uniform(3, 4), 0.0), DimensionMismatch);
}

TEST(Solver, StartValueGradientByDifferences) {
    const Pomdp p = fixture("cheese").pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 13);
    const StartValueGradient g = start_value_gradient(p, pi);
    const double h = 1e-6;
    for (std::size_t o = 0; o < p.n_obs(); ++o)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            Matrix up = pi.probs(), dn = pi.probs();
            up(o, a) += h;
            dn(o, a) -= h;
            // unnormalized perturbations: the value is linear-fractional in each entry
            const double fd = (oracle::value_iteration_q(p, oracle::state_policy(p, Policy(up))).cwiseProduct(
                                   oracle::state_policy(p, Policy(up))).rowwise().sum().dot(p.p0()) -
                               oracle::value_iteration_q(p, oracle::state_policy(p, Policy(dn))).cwiseProduct(
                                   oracle::state_policy(p, Policy(dn))).rowwise().sum().dot(p.p0())) /
                              (2 * h);
            EXPECT_NEAR(g.grad_probs(o, a), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
}

#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/solver.hpp"

#include <gtest/gtest.h>

using namespace ldisc;

TEST(Environments, EverythingValidates) {
    for (const auto& name : environment_names()) {
        SCOPED_TRACE(name);
        const Pomdp p = environment(name).pomdp;
        EXPECT_TRUE(validate(p).ok()) << validate(p).summary();
    }
    EXPECT_THROW(environment("nope"), Error);
}

TEST(Environments, TmazeShape) {
    const Pomdp p = tmaze(5).pomdp;
    EXPECT_EQ(p.n_states(), 2u + 2u * 5u + 2u + 1u);
    EXPECT_EQ(p.n_obs(), 5u);
    EXPECT_EQ(p.n_actions(), 4u);
    EXPECT_TRUE(p.terminal().back());
    EXPECT_DOUBLE_EQ(p.p0()(0), 0.5);
    EXPECT_DOUBLE_EQ(p.p0()(1), 0.5);
    const Pomdp mdp = tmaze_fully_observable(5).pomdp;
    EXPECT_EQ(mdp.n_obs(), mdp.n_states());
    EXPECT_EQ(mdp.transitions(), p.transitions());
}

TEST(Environments, TmazeRewardsAtJunction) {
    const Pomdp p = tmaze(3).pomdp;
    const std::size_t junction_blue = 2 + 2 * 3, junction_red = junction_blue + 1;
    EXPECT_DOUBLE_EQ(p.rewards()(junction_blue, 0), 4.0);
    EXPECT_DOUBLE_EQ(p.rewards()(junction_blue, 1), -0.1);
    EXPECT_DOUBLE_EQ(p.rewards()(junction_red, 1), 4.0);
    EXPECT_DOUBLE_EQ(p.rewards()(junction_red, 0), -0.1);
}

TEST(Environments, AliasedPhiPatterns) {
    const std::size_t L = 5;
    for (AliasingPattern pattern : {AliasingPattern::Corridor, AliasingPattern::Junction, AliasingPattern::Both}) {
        const Matrix phi = tmaze_aliased_phi(L, pattern);
        EXPECT_EQ(aliasing_from_string(to_string(pattern)), pattern);
        for (Eigen::Index s = 0; s < phi.rows(); ++s) EXPECT_DOUBLE_EQ(phi.row(s).sum(), 1.0);
        const bool corridor = pattern != AliasingPattern::Junction;
        EXPECT_EQ(phi(2 + 2 * 4 + 1, 2) == 1.0, corridor);
        const bool junction = pattern != AliasingPattern::Corridor;
        EXPECT_EQ(phi(2 + 2 * L + 1, 2 + 2 * L) == 1.0, junction);
    }
}

TEST(Environments, MixObservationEndpoints) {
    const Pomdp p = tmaze_fully_observable(5, 1.0).pomdp;
    const Matrix alias = tmaze_aliased_phi(5, AliasingPattern::Both);
    EXPECT_EQ(mix_observation(p, alias, 0.0).phi(), p.phi());
    EXPECT_EQ(mix_observation(p, alias, 1.0).phi(), alias);
    const Pomdp half = mix_observation(p, alias, 0.5);
    EXPECT_TRUE(validate(half).ok());
}

TEST(Environments, ParityPerturbations) {
    const Pomdp base = parity_check().pomdp;
    EXPECT_DOUBLE_EQ(base.gamma(), 0.9);
    const Pomdp shifted = parity_check(ParityOptions{0.9, 0.1, 0.0}).pomdp;
    EXPECT_NEAR(shifted.p0().sum(), 1.0, 1e-15);
    EXPECT_NE(shifted.p0(), base.p0());
    const Pomdp sticky = parity_check(ParityOptions{0.9, 0.0, 0.5}).pomdp;
    EXPECT_TRUE(validate(sticky).ok());
    EXPECT_NE(sticky.transitions(), base.transitions());
}

TEST(Environments, ParityMemorylessDiscrepancyIsZero) {
    const Pomdp p = parity_check().pomdp;
    for (std::uint64_t k = 0; k < 20; ++k)
        EXPECT_LE(lambda_discrepancy(p, random_policy(p.n_obs(), p.n_actions(), k), {}), 1e-8);
}

TEST(Environments, TkCollapsedSharesObservations) {
    const Pomdp tk = tk_equality().pomdp, mdp = tk_equality_collapsed().pomdp;
    EXPECT_EQ(tk.n_states(), 6u);
    EXPECT_EQ(mdp.n_states(), 5u);
    EXPECT_EQ(tk.n_obs(), mdp.n_obs());
    EXPECT_EQ(tk.n_actions(), mdp.n_actions());
    // the collapsed model is an MDP whose values equal the POMDP's Monte Carlo values
    for (std::uint64_t k = 0; k < 5; ++k) {
        const Policy pi = random_policy(tk.n_obs(), tk.n_actions(), k);
        const Matrix a = q_lambda(tk, pi, 1.0).values, b = q_lambda(mdp, pi, 1.0).values;
        const OccupancyWeights occ = stationary_weights(tk, pi);
        for (std::size_t o = 0; o < tk.n_obs(); ++o)
            if (occ.reachable_obs[o]) { EXPECT_LT((a.row(o) - b.row(o)).cwiseAbs().maxCoeff(), 1e-9); }
    }
}

TEST(Environments, RandomBlockMdpIsSeeded) {
    const Pomdp a = random_block_mdp(5, 3, 2, 1).pomdp, b = random_block_mdp(5, 3, 2, 1).pomdp;
    EXPECT_EQ(a.transitions(), b.transitions());
    EXPECT_EQ(a.n_obs(), 10u);
    EXPECT_TRUE(is_block_mdp(a));
    EXPECT_LE(a.rewards().cwiseAbs().maxCoeff(), 1.0);
    EXPECT_NE(random_block_mdp(5, 3, 2, 2).pomdp.transitions(), a.transitions());
}

TEST(Environments, FixtureNames) {
    const auto& names = fixture_names();
    EXPECT_EQ(names.size(), 6u);
    for (const auto& n : names) EXPECT_FALSE(fixture_text(n).empty());
    EXPECT_THROW(fixture_text("missing"), Error);
}

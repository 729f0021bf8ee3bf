#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/memory.hpp"
#include "ldisc/optimizer.hpp"
#include "ldisc/solver.hpp"

#include <gtest/gtest.h>

using namespace ldisc;

TEST(Memory, ProbabilitiesAreSoftmaxOverNextMemory) {
    const MemoryFn mu = random_memory(3, 2, 3, 7);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t m = 0; m < 3; ++m) {
                double total = 0.0;
                for (std::size_t m2 = 0; m2 < 3; ++m2) total += mu(o, a, m, m2);
                EXPECT_NEAR(total, 1.0, 1e-15);
            }
    EXPECT_EQ(mu.seed(), std::optional<std::uint64_t>(7));
    const MemoryFn zero(2, 2, 4);
    EXPECT_DOUBLE_EQ(zero(1, 1, 2, 3), 0.25);
}

TEST(Memory, IdentityAndArgmax) {
    const MemoryFn id = MemoryFn::identity(2, 2, 2);
    EXPECT_NEAR(id(0, 1, 1, 1), 1.0, 1e-12);
    EXPECT_NEAR(id(0, 1, 1, 0), 0.0, 1e-12);
    const MemoryFn mu = random_memory(2, 2, 2, 3);
    const MemoryFn hard = memory_argmax(mu);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t m = 0; m < 2; ++m) {
                const std::size_t best = mu(o, a, m, 1) > mu(o, a, m, 0) ? 1 : 0;
                EXPECT_NEAR(hard(o, a, m, best), 1.0, 1e-12);
            }
}

TEST(Memory, SingleMemoryStateLeavesModelUnchanged) {
    for (const char* name : {"tmaze", "tiger", "parity"}) {
        SCOPED_TRACE(name);
        const Pomdp p = environment(name).pomdp;
        const Pomdp aug = augment(p, random_memory(p.n_obs(), p.n_actions(), 1, 0));
        EXPECT_EQ(aug.transitions(), p.transitions());
        EXPECT_EQ(aug.phi(), p.phi());
        EXPECT_EQ(aug.rewards(), p.rewards());
        EXPECT_EQ(aug.p0(), p.p0());
        EXPECT_EQ(aug.terminal(), p.terminal());
        EXPECT_EQ(lift_policy(Policy::uniform(p.n_obs(), p.n_actions()), 1).probs(),
                  Policy::uniform(p.n_obs(), p.n_actions()).probs());
    }
}

TEST(Memory, AugmentedLayout) {
    const Pomdp p = tmaze(2).pomdp;
    const std::size_t M = 2, S = p.n_states(), A = p.n_actions();
    const MemoryFn mu = random_memory(p.n_obs(), A, M, 4);
    const Pomdp aug = augment(p, mu);
    ASSERT_EQ(aug.n_states(), S * M);
    ASSERT_EQ(aug.n_obs(), p.n_obs() * M);
    EXPECT_TRUE(validate(aug).ok()) << validate(aug).summary();
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t m = 0; m < M; ++m) {
            EXPECT_DOUBLE_EQ(aug.p0()(static_cast<Eigen::Index>(s * M + m)), m == 0 ? p.p0()(static_cast<Eigen::Index>(s)) : 0.0);
            EXPECT_EQ(aug.terminal()[s * M + m], p.terminal()[s]);
            for (std::size_t a = 0; a < A; ++a) {
                EXPECT_DOUBLE_EQ(aug.rewards()(static_cast<Eigen::Index>(s * M + m), static_cast<Eigen::Index>(a)),
                                 p.rewards()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
                for (std::size_t s2 = 0; s2 < S; ++s2)
                    for (std::size_t m2 = 0; m2 < M; ++m2) {
                        double expect = 0.0;
                        for (std::size_t o = 0; o < p.n_obs(); ++o)
                            expect += p.phi()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) * mu(o, a, m, m2);
                        EXPECT_NEAR(aug.T(s * M + m, a, s2 * M + m2), p.T(s, a, s2) * expect, 1e-15);
                    }
            }
            for (std::size_t o = 0; o < p.n_obs(); ++o)
                for (std::size_t m2 = 0; m2 < M; ++m2)
                    EXPECT_DOUBLE_EQ(aug.phi()(static_cast<Eigen::Index>(s * M + m), static_cast<Eigen::Index>(o * M + m2)),
                                     m == m2 ? p.phi()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) : 0.0);
        }
}

TEST(Memory, IdentityMemoryPreservesValues) {
    // with memory never updated and a lifted policy, values match the original
    const Pomdp p = fixture("cheese").pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 2);
    const Pomdp aug = augment(p, MemoryFn::identity(p.n_obs(), p.n_actions(), 3));
    const Policy lifted = lift_policy(pi, 3);
    EXPECT_NEAR(start_value(aug, lifted), start_value(p, pi), 1e-8);
    EXPECT_NEAR(lambda_discrepancy(aug, lifted, {}), lambda_discrepancy(p, pi, {}), 1e-8);
}

TEST(Memory, JsonRoundTrip) {
    const MemoryFn mu = random_memory(3, 2, 2, 99);
    const MemoryFn back = memory_from_json(to_json(mu));
    EXPECT_EQ(back.logits(), mu.logits());
    EXPECT_EQ(back.probs(), mu.probs());
    EXPECT_EQ(back.seed(), mu.seed());
    nlohmann::json bad = to_json(mu);
    bad["logits"] = nlohmann::json::array({1.0, 2.0});
    EXPECT_THROW(memory_from_json(bad), Error);
}

TEST(Memory, ShapeMismatchRejected) {
    const Pomdp p = tmaze().pomdp;
    EXPECT_THROW(augment(p, random_memory(p.n_obs() + 1, p.n_actions(), 2, 0)), DimensionMismatch);
    EXPECT_THROW(lift_policy(Policy::uniform(2, 2), 0), DimensionMismatch);
}

TEST(Memory, GradientVanishesForOneMemoryState) {
    const Pomdp p = tmaze().pomdp;
    const MemoryFn mu = random_memory(p.n_obs(), p.n_actions(), 1, 0);
    const GradientReport g =
        ld_objective_and_gradient(p, mu, random_policy(p.n_obs(), p.n_actions(), 1), {});
    for (double v : g.grad) EXPECT_EQ(v, 0.0);
}

#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/model.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ldisc;

namespace {

// Two states, two actions, state 1 absorbing with zero reward.
Pomdp tiny(double gamma = 0.9) {
    Matrix T(4, 2);
    T << 0.5, 0.5,
         0.0, 1.0,
         0.0, 1.0,
         0.0, 1.0;
    Matrix R(2, 2);
    R << 1.0, -1.0,
         0.0, 0.0;
    Matrix phi = Matrix::Identity(2, 2);
    Vector p0(2);
    p0 << 1.0, 0.0;
    return Pomdp(T, R, phi, p0, gamma, {false, true});
}

bool has_check(const ValidationReport& r, const std::string& name) {
    for (const auto& i : r.issues)
        if (i.check == name) return true;
    return false;
}

}  // namespace

TEST(Model, ShapesAndAccessors) {
    const Pomdp p = tiny();
    EXPECT_EQ(p.n_states(), 2u);
    EXPECT_EQ(p.n_actions(), 2u);
    EXPECT_EQ(p.n_obs(), 2u);
    EXPECT_DOUBLE_EQ(p.T(0, 0, 1), 0.5);
    EXPECT_DOUBLE_EQ(p.T(0, 1, 1), 1.0);
    EXPECT_TRUE(validate(p).ok());
}

TEST(Model, ConstructorRejectsMismatchedShapes) {
    Matrix T = Matrix::Zero(3, 2);
    EXPECT_THROW(Pomdp(T, Matrix::Zero(2, 2), Matrix::Identity(2, 2), Vector::Ones(2) / 2, 0.9,
                       {false, false}),
                 DimensionMismatch);
    EXPECT_THROW(Pomdp(Matrix::Zero(4, 2), Matrix::Zero(2, 2), Matrix::Identity(3, 3),
                       Vector::Ones(2) / 2, 0.9, {false, false}),
                 DimensionMismatch);
    EXPECT_THROW(Pomdp(Matrix::Zero(4, 2), Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                       Vector::Ones(2) / 2, 0.9, {false}),
                 DimensionMismatch);
}

TEST(Model, SolveTransitionsZeroTerminalRows) {
    const Pomdp p = tiny();
    const Matrix Ts = p.solve_transitions();
    EXPECT_DOUBLE_EQ(Ts.row(0).sum(), 1.0);
    EXPECT_DOUBLE_EQ(Ts.row(1).sum(), 1.0);
    EXPECT_DOUBLE_EQ(Ts.row(2).cwiseAbs().sum(), 0.0);
    EXPECT_DOUBLE_EQ(Ts.row(3).cwiseAbs().sum(), 0.0);
    // the stored matrix keeps the absorbing rows
    EXPECT_DOUBLE_EQ(p.transitions().row(3).sum(), 1.0);
}

TEST(Model, ValidationNamesEachBrokenSlice) {
    const Pomdp p = tiny();
    Matrix T = p.transitions();
    T(1, 1) = 0.7;
    EXPECT_TRUE(has_check(validate(p.with_transitions(T)), "T_row_sum"));

    Matrix phi = p.phi();
    phi(0, 0) = 0.5;
    EXPECT_TRUE(has_check(validate(p.with_phi(phi)), "Phi_row_sum"));

    Vector p0 = p.p0();
    p0(0) = 0.5;
    EXPECT_TRUE(has_check(validate(p.with_p0(p0)), "p0_sum"));

    EXPECT_FALSE(validate(p.with_gamma(1.5)).ok());
    EXPECT_FALSE(validate(p.with_gamma(-0.1)).ok());
    EXPECT_THROW(require_valid(p.with_p0(p0)), InvalidModel);

    T = p.transitions();
    T(0, 0) = -0.1;
    T(0, 1) = 1.1;
    EXPECT_FALSE(validate(p.with_transitions(T)).ok());
}

TEST(Model, ValidationMessageNamesIndex) {
    const Pomdp p = tiny();
    Matrix T = p.transitions();
    T(1, 1) = 0.7;
    const auto r = validate(p.with_transitions(T));
    ASSERT_FALSE(r.ok());
    EXPECT_NE(r.summary().find("T_row_sum"), std::string::npos);
}

TEST(Model, PolicyConstruction) {
    const Policy u = Policy::uniform(3, 4);
    EXPECT_DOUBLE_EQ(u(2, 3), 0.25);
    EXPECT_TRUE(validate(u).ok());

    Matrix logits(1, 2);
    logits << 0.0, std::log(3.0);
    const Policy s = Policy::from_logits(logits);
    EXPECT_NEAR(s(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(s(0, 1), 0.75, 1e-15);
    ASSERT_TRUE(s.logits().has_value());

    // large logits must not overflow
    logits << 1000.0, 0.0;
    const Policy big = Policy::from_logits(logits);
    EXPECT_NEAR(big(0, 0), 1.0, 1e-15);

    Matrix bad(1, 2);
    bad << 0.3, 0.3;
    EXPECT_FALSE(validate(Policy(bad)).ok());
}

TEST(Model, RandomPolicyIsSeeded) {
    const Policy a = random_policy(4, 3, 11), b = random_policy(4, 3, 11), c = random_policy(4, 3, 12);
    EXPECT_EQ(a.probs(), b.probs());
    EXPECT_NE(a.probs(), c.probs());
    EXPECT_TRUE(validate(a).ok());
}

TEST(Model, CompatibilityChecks) {
    const Pomdp p = tiny();
    EXPECT_NO_THROW(require_compatible(p, Policy::uniform(2, 2)));
    EXPECT_THROW(require_compatible(p, Policy::uniform(3, 2)), DimensionMismatch);
    EXPECT_THROW(require_compatible(p, Policy::uniform(2, 3)), DimensionMismatch);
}

TEST(Model, PolicyTensorsMatchDefinitions) {
    const Pomdp p = tmaze().pomdp;
    const Policy pi = random_policy(p.n_obs(), p.n_actions(), 3);
    const PolicyTensors t = policy_tensors(p, pi);
    for (std::size_t o = 0; o < p.n_obs(); ++o)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            EXPECT_DOUBLE_EQ(t.Pi(o, o, a), pi(o, a));
            for (std::size_t s = 0; s < p.n_states(); ++s)
                EXPECT_DOUBLE_EQ(t.WPi(o, s, a), t.W(o, s) * pi(o, a));
        }
    for (std::size_t s = 0; s < p.n_states(); ++s)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            double expect = 0.0;
            for (std::size_t o = 0; o < p.n_obs(); ++o) expect += p.phi()(s, o) * pi(o, a);
            EXPECT_NEAR(t.PiS(s, s, a), expect, 1e-15);
        }
    for (std::size_t o = 0; o < p.n_obs(); ++o) EXPECT_NEAR(t.W.row(o).sum(), 1.0, 1e-12);
}

TEST(Model, BlockMdpDetection) {
    EXPECT_TRUE(is_block_mdp(tiny()));
    EXPECT_TRUE(is_block_mdp(tmaze_fully_observable().pomdp));
    EXPECT_FALSE(is_block_mdp(tmaze().pomdp));
    EXPECT_TRUE(is_block_mdp(random_block_mdp(4, 2, 2, 5).pomdp));
}

#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/parser.hpp"

#include <gtest/gtest.h>

#include <ios>
#include <string>

using namespace ldisc;

namespace {

const char* kTwoState = R"(# comment line
discount: 0.9
values: reward
states: a b
actions: go stay
observations: x y
start: 1 0

T: go : a : b 1.0
T: stay : a : a 1.0
T: * : b : b 1.0

O: * : a
0.75 0.25
O: * : b : y 1.0

R: go : a : * : * 2.0
R: stay : a : * : * -1
)";

void expect_equal(const Pomdp& a, const Pomdp& b) {
    EXPECT_EQ(a.transitions(), b.transitions());
    EXPECT_EQ(a.rewards(), b.rewards());
    EXPECT_EQ(a.phi(), b.phi());
    EXPECT_EQ(a.p0(), b.p0());
    EXPECT_EQ(a.gamma(), b.gamma());
    EXPECT_EQ(a.terminal(), b.terminal());
}

std::size_t error_line(const std::string& text) {
    try {
        parse_pomdp(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST(Parser, SmallFileWithWildcards) {
    const PomdpSource src = parse_pomdp(kTwoState, "two");
    const Pomdp& p = src.pomdp;
    EXPECT_EQ(src.name, "two");
    EXPECT_EQ(src.origin, Origin::File);
    ASSERT_EQ(p.n_states(), 2u);
    ASSERT_EQ(p.n_actions(), 2u);
    ASSERT_EQ(p.n_obs(), 2u);
    EXPECT_DOUBLE_EQ(p.gamma(), 0.9);
    EXPECT_DOUBLE_EQ(p.T(0, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(p.T(0, 1, 0), 1.0);
    EXPECT_DOUBLE_EQ(p.T(1, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(p.T(1, 1, 1), 1.0);
    EXPECT_DOUBLE_EQ(p.phi()(0, 0), 0.75);
    EXPECT_DOUBLE_EQ(p.phi()(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(p.rewards()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(p.rewards()(0, 1), -1.0);
    EXPECT_EQ(p.terminal(), (std::vector<bool>{false, true}));
    EXPECT_EQ(src.state_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_TRUE(validate(p).ok());
}

TEST(Parser, RewardIsExpectationOverNextStateAndObservation) {
    const std::string text = R"(discount: 1
values: reward
states: 3
actions: 1
observations: 2
T: 0 : 0
0 0.5 0.5
T: 0 : 1 : 1 1
T: 0 : 2 : 2 1
O: * : 0 : 0 1
O: * : 1
0.5 0.5
O: * : 2 : 1 1
R: 0 : 0 : 1 : 0 4
R: 0 : 0 : 1 : 1 8
R: 0 : 0 : 2 : * 10
)";
    const Pomdp p = parse_pomdp(text).pomdp;
    // 0.5 * (0.5 * 4 + 0.5 * 8) + 0.5 * 10
    EXPECT_DOUBLE_EQ(p.rewards()(0, 0), 8.0);
    EXPECT_EQ(p.p0(), Vector::Constant(3, 1.0 / 3.0));
}

TEST(Parser, UniformAndIdentityForms) {
    const std::string text = R"(discount: 0.5
values: reward
states: 3
actions: 2
observations: 3
start: uniform
T: 0
identity
T: 1
uniform
O: *
identity
)";
    const Pomdp p = parse_pomdp(text).pomdp;
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_DOUBLE_EQ(p.T(s, 0, s), 1.0);
        for (std::size_t s2 = 0; s2 < 3; ++s2) EXPECT_DOUBLE_EQ(p.T(s, 1, s2), 1.0 / 3.0);
    }
    EXPECT_EQ(p.phi(), Matrix::Identity(3, 3));
}

TEST(Parser, StartByStateName) {
    std::string text = kTwoState;
    text.replace(text.find("start: 1 0"), 10, "start: b");
    const Pomdp p = parse_pomdp(text).pomdp;
    EXPECT_DOUBLE_EQ(p.p0()(1), 1.0);
    EXPECT_DOUBLE_EQ(p.p0()(0), 0.0);
}

TEST(Parser, ErrorsCarryLineNumbers) {
    std::string text = kTwoState;
    text.replace(text.find("T: go : a : b 1.0"), 17, "T: go : a : zz 1.0");
    EXPECT_EQ(error_line(text), 9u);

    text = kTwoState;
    text.replace(text.find("0.75 0.25"), 9, "0.75 abc");
    EXPECT_EQ(error_line(text), 14u);

    EXPECT_EQ(error_line("discount: 0.9\nbogus: 1\n"), 2u);
    EXPECT_NE(error_line("states: 2\n"), 0u);  // no discount
}

TEST(Parser, CostValuesAreUnsupported) {
    std::string text = kTwoState;
    text.replace(text.find("values: reward"), 14, "values: cost");
    EXPECT_THROW(parse_pomdp(text), Unsupported);
}

TEST(Parser, ActionDependentObservationsRejected) {
    std::string text = kTwoState;
    text.replace(text.find("O: * : a\n0.75 0.25"), 18, "O: go : a\n0.75 0.25\nO: stay : a\n0.5 0.5");
    EXPECT_THROW(parse_pomdp(text), ActionDependentObservations);
}

TEST(Parser, RoundTripIsExact) {
    const PomdpSource a = parse_pomdp(kTwoState);
    const PomdpSource b = parse_pomdp(to_cassandra(a));
    expect_equal(a.pomdp, b.pomdp);
    EXPECT_EQ(a.action_names, b.action_names);
    for (const auto& name : fixture_names()) {
        SCOPED_TRACE(name);
        const PomdpSource f = fixture(name);
        expect_equal(f.pomdp, parse_pomdp(to_cassandra(f)).pomdp);
    }
    // generated environments too, including non-dyadic probabilities
    const PomdpSource tk = tk_equality();
    expect_equal(tk.pomdp, parse_pomdp(to_cassandra(tk)).pomdp);
    const PomdpSource blk = random_block_mdp(5, 3, 2, 9);
    expect_equal(blk.pomdp, parse_pomdp(to_cassandra(blk)).pomdp);
}

TEST(Parser, BundledFilesLoadAndValidate) {
    for (const auto& name : fixture_names()) {
        SCOPED_TRACE(name);
        const PomdpSource f = load_pomdp_file(std::string(LDISC_DATA_DIR) + "/pomdps/" + name + ".POMDP");
        EXPECT_TRUE(validate(f.pomdp).ok()) << validate(f.pomdp).summary();
        EXPECT_LE(f.pomdp.gamma(), 0.95);
        expect_equal(f.pomdp, fixture(name).pomdp);
        EXPECT_EQ(fixture(name).origin, Origin::Builtin);
    }
}

TEST(Parser, TigerLayout) {
    const PomdpSource t = fixture("tiger");
    EXPECT_EQ(t.pomdp.n_states(), 5u);
    EXPECT_EQ(t.pomdp.n_actions(), 3u);
    EXPECT_EQ(t.pomdp.n_obs(), 4u);
    EXPECT_EQ(t.pomdp.terminal(), (std::vector<bool>{false, false, false, false, true}));
    EXPECT_DOUBLE_EQ(t.pomdp.rewards()(0, 1), -100.0);
    EXPECT_DOUBLE_EQ(t.pomdp.phi()(2, 1), 0.85);
}

TEST(Parser, MissingFileIsIoError) {
    EXPECT_THROW(load_pomdp_file("/nonexistent/file.POMDP"), std::ios_base::failure);
}

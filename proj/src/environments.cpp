#include "ldisc/environments.hpp"

#include "embedded_fixtures.hpp"
#include "ldisc/errors.hpp"

#include <algorithm>
#include <random>

namespace ldisc {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Mutable builder for small hand-written environments.
struct Builder {
    std::size_t S, A;
    Matrix T, R, phi;
    Vector p0;
    std::vector<bool> terminal;

    Builder(std::size_t n_states, std::size_t n_actions, std::size_t n_obs)
        : S(n_states),
          A(n_actions),
          T(Matrix::Zero(idx(n_states * n_actions), idx(n_states))),
          R(Matrix::Zero(idx(n_states), idx(n_actions))),
          phi(Matrix::Zero(idx(n_states), idx(n_obs))),
          p0(Vector::Zero(idx(n_states))),
          terminal(n_states, false) {}

    double& t(std::size_t s, std::size_t a, std::size_t s2) { return T(idx(s * A + a), idx(s2)); }
    void absorbing(std::size_t s) {
        terminal[s] = true;
        for (std::size_t a = 0; a < A; ++a) t(s, a, s) = 1.0;
    }
    Pomdp build(double gamma) const { return Pomdp(T, R, phi, p0, gamma, terminal); }
};

struct TmazeIndex {
    std::size_t L;
    std::size_t start(std::size_t g) const { return g; }
    std::size_t hall(std::size_t i, std::size_t g) const { return 2 + 2 * i + g; }
    std::size_t junction(std::size_t g) const { return 2 + 2 * L + g; }
    std::size_t terminal() const { return 2 + 2 * L + 2; }
    std::size_t n_states() const { return 2 + 2 * L + 3; }
};

enum TmazeAction : std::size_t { kUp = 0, kDown = 1, kRight = 2, kLeft = 3 };

Builder tmaze_dynamics(std::size_t L, std::size_t n_obs) {
    if (L == 0) throw Error("T-maze corridor length must be at least 1");
    const TmazeIndex ix{L};
    Builder b(ix.n_states(), 4, n_obs);
    for (std::size_t g = 0; g < 2; ++g) {
        const std::size_t s = ix.start(g);
        b.t(s, kUp, s) = b.t(s, kDown, s) = b.t(s, kLeft, s) = 1.0;
        b.t(s, kRight, ix.hall(0, g)) = 1.0;
        for (std::size_t i = 0; i < L; ++i) {
            const std::size_t h = ix.hall(i, g);
            b.t(h, kUp, h) = b.t(h, kDown, h) = 1.0;
            b.t(h, kRight, i + 1 < L ? ix.hall(i + 1, g) : ix.junction(g)) = 1.0;
            b.t(h, kLeft, i == 0 ? ix.start(g) : ix.hall(i - 1, g)) = 1.0;
        }
        const std::size_t j = ix.junction(g);
        b.t(j, kUp, ix.terminal()) = b.t(j, kDown, ix.terminal()) = 1.0;
        b.t(j, kRight, j) = 1.0;
        b.t(j, kLeft, ix.hall(L - 1, g)) = 1.0;
        b.R(idx(j), kUp) = g == 0 ? 4.0 : -0.1;
        b.R(idx(j), kDown) = g == 0 ? -0.1 : 4.0;
        b.p0(idx(s)) = 0.5;
    }
    b.absorbing(ix.terminal());
    return b;
}

std::vector<std::string> tmaze_state_names(std::size_t L) {
    std::vector<std::string> names = {"start_blue", "start_red"};
    for (std::size_t i = 0; i < L; ++i)
        for (const char* g : {"up", "down"}) names.push_back("hall" + std::to_string(i) + "_" + g);
    names.push_back("junction_up");
    names.push_back("junction_down");
    names.push_back("terminal");
    return names;
}

const std::vector<std::string> kTmazeActions = {"up", "down", "right", "left"};

}  // namespace

PomdpSource tmaze(std::size_t corridor_len, double gamma) {
    const TmazeIndex ix{corridor_len};
    Builder b = tmaze_dynamics(corridor_len, 5);
    for (std::size_t g = 0; g < 2; ++g) {
        b.phi(idx(ix.start(g)), idx(g)) = 1.0;
        for (std::size_t i = 0; i < corridor_len; ++i) b.phi(idx(ix.hall(i, g)), 2) = 1.0;
        b.phi(idx(ix.junction(g)), 3) = 1.0;
    }
    b.phi(idx(ix.terminal()), 4) = 1.0;

    PomdpSource src;
    src.name = "tmaze";
    src.pomdp = b.build(gamma);
    src.state_names = tmaze_state_names(corridor_len);
    src.action_names = kTmazeActions;
    src.obs_names = {"blue", "red", "corridor", "junction", "terminal"};
    return src;
}

PomdpSource tmaze_fully_observable(std::size_t corridor_len, double gamma) {
    Builder b = tmaze_dynamics(corridor_len, TmazeIndex{corridor_len}.n_states());
    b.phi.setIdentity();
    PomdpSource src;
    src.name = "tmaze-mdp";
    src.pomdp = b.build(gamma);
    src.state_names = tmaze_state_names(corridor_len);
    src.action_names = kTmazeActions;
    src.obs_names = src.state_names;
    return src;
}

std::string to_string(AliasingPattern pattern) {
    switch (pattern) {
        case AliasingPattern::Corridor: return "corridor";
        case AliasingPattern::Junction: return "junction";
        case AliasingPattern::Both: return "both";
    }
    return "unknown";
}

AliasingPattern aliasing_from_string(const std::string& name) {
    if (name == "corridor") return AliasingPattern::Corridor;
    if (name == "junction") return AliasingPattern::Junction;
    if (name == "both") return AliasingPattern::Both;
    throw Error("unknown aliasing pattern '" + name + "'");
}

Matrix tmaze_aliased_phi(std::size_t corridor_len, AliasingPattern pattern) {
    const TmazeIndex ix{corridor_len};
    const Index S = idx(ix.n_states());
    Matrix phi = Matrix::Identity(S, S);
    const bool corridor = pattern != AliasingPattern::Junction;
    const bool junction = pattern != AliasingPattern::Corridor;
    if (corridor) {
        for (std::size_t i = 0; i < corridor_len; ++i)
            for (std::size_t g = 0; g < 2; ++g) {
                phi.row(idx(ix.hall(i, g))).setZero();
                phi(idx(ix.hall(i, g)), idx(ix.hall(0, 0))) = 1.0;
            }
    }
    if (junction) {
        for (std::size_t g = 0; g < 2; ++g) {
            phi.row(idx(ix.junction(g))).setZero();
            phi(idx(ix.junction(g)), idx(ix.junction(0))) = 1.0;
        }
    }
    return phi;
}

Policy tmaze_right_then_up_policy() {
    Matrix probs = Matrix::Zero(5, 4);
    probs(0, kRight) = probs(1, kRight) = probs(2, kRight) = 1.0;
    probs(3, kUp) = 1.0;
    probs.row(4).setConstant(0.25);
    return Policy(probs);
}

Policy tmaze_sweep_policy(std::size_t corridor_len) {
    const TmazeIndex ix{corridor_len};
    Matrix probs = Matrix::Zero(idx(ix.n_states()), 4);
    for (std::size_t g = 0; g < 2; ++g) {
        probs(idx(ix.start(g)), kRight) = 1.0;
        for (std::size_t i = 0; i < corridor_len; ++i) probs(idx(ix.hall(i, g)), kRight) = 1.0;
        probs(idx(ix.junction(g)), kUp) = 2.0 / 3.0;
        probs(idx(ix.junction(g)), kDown) = 1.0 / 3.0;
    }
    probs.row(idx(ix.terminal())).setConstant(0.25);
    return Policy(probs);
}

PomdpSource parity_check(const ParityOptions& options) {
    // States 0-3 first colour per branch, 4-7 second colour, 8 junction after
    // matching colours, 9 after mismatching colours, 10 terminal.
    enum Obs : std::size_t { kRed, kBlue, kPink, kCyan, kWhite, kTerminal };
    enum Act : std::size_t { kAUp = 0, kADown = 1 };
    const std::size_t first[4] = {kRed, kRed, kBlue, kBlue};
    const std::size_t second[4] = {kPink, kCyan, kPink, kCyan};
    const bool match[4] = {true, false, false, true};

    Builder b(11, 2, 6);
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t junction = match[k] ? 8 : 9;
        for (std::size_t a = 0; a < 2; ++a) {
            b.t(k, a, 4 + k) = 1.0;
            b.t(4 + k, a, junction) = 1.0;
        }
        b.phi(idx(k), idx(first[k])) = 1.0;
        b.phi(idx(4 + k), idx(second[k])) = 1.0;
    }
    if (options.stay_prob < 0.0 || options.stay_prob > 1.0)
        throw Error("stay probability must lie in [0,1]");
    b.t(0, kADown, 4) = 1.0 - options.stay_prob;
    b.t(0, kADown, 0) = options.stay_prob;

    for (std::size_t j : {8, 9}) {
        b.t(j, kAUp, 10) = b.t(j, kADown, 10) = 1.0;
        b.phi(idx(j), kWhite) = 1.0;
    }
    b.R(8, kAUp) = 1.0;
    b.R(8, kADown) = -1.0;
    b.R(9, kAUp) = -1.0;
    b.R(9, kADown) = 1.0;
    b.absorbing(10);
    b.phi(10, kTerminal) = 1.0;

    const double d = options.start_shift;
    if (d < -0.25 || d > 0.25) throw Error("start shift must lie in [-0.25,0.25]");
    b.p0 << 0.25 + d, 0.25 - d, 0.25, 0.25, 0, 0, 0, 0, 0, 0, 0;

    PomdpSource src;
    src.name = "parity";
    src.pomdp = b.build(options.gamma);
    src.state_names = {"red_pink_1",  "red_cyan_1",  "blue_pink_1",  "blue_cyan_1",
                       "red_pink_2",  "red_cyan_2",  "blue_pink_2",  "blue_cyan_2",
                       "junction_match", "junction_mismatch", "terminal"};
    src.action_names = {"up", "down"};
    src.obs_names = {"red", "blue", "pink", "cyan", "white", "terminal"};
    return src;
}

namespace {

// tk_equality states: s0 s1 sx s2 s3 terminal.
enum TkState : std::size_t { kS0, kS1, kSx, kS2, kS3, kTk };

// Rewards and dynamics of s1, sx, s2 after the first step, shared with the
// collapsed model.
struct TkRow {
    double to_s3;
    double reward;
};
// rows[state][action] for s1, sx, s2
const TkRow kTkRows[3][2] = {
    {{1.0, 1.0}, {0.0, 0.5}},   // s1
    {{0.0, -1.0}, {0.5, 0.2}},  // sx
    {{0.3, 0.0}, {1.0, -0.5}},  // s2
};

}  // namespace

PomdpSource tk_equality() {
    Builder b(6, 2, 5);
    for (std::size_t a = 0; a < 2; ++a) {
        b.t(kS0, a, kS1) = 0.25;
        b.t(kS0, a, kSx) = 0.5;
        b.t(kS0, a, kS2) = 0.25;
    }
    b.R(kS0, 0) = 0.0;
    b.R(kS0, 1) = 0.1;
    const std::size_t middle[3] = {kS1, kSx, kS2};
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t a = 0; a < 2; ++a) {
            b.t(middle[k], a, kS3) = kTkRows[k][a].to_s3;
            b.t(middle[k], a, kTk) = 1.0 - kTkRows[k][a].to_s3;
            b.R(idx(middle[k]), idx(a)) = kTkRows[k][a].reward;
        }
    b.t(kS3, 0, kTk) = b.t(kS3, 1, kTk) = 1.0;
    b.R(kS3, 0) = 1.0;
    b.R(kS3, 1) = -1.0;
    b.absorbing(kTk);

    b.phi(kS0, 0) = 1.0;
    b.phi(kS1, 1) = 1.0;
    b.phi(kSx, 1) = 0.5;
    b.phi(kSx, 2) = 0.5;
    b.phi(kS2, 2) = 1.0;
    b.phi(kS3, 3) = 1.0;
    b.phi(kTk, 4) = 1.0;
    b.p0(kS0) = 1.0;

    PomdpSource src;
    src.name = "tk-equality";
    src.pomdp = b.build(0.9);
    src.state_names = {"s0", "s1", "sx", "s2", "s3", "terminal"};
    src.action_names = {"a0", "a1"};
    src.obs_names = {"o0", "o1", "o2", "o3", "terminal"};
    return src;
}

PomdpSource tk_equality_collapsed() {
    // From s0, o1 is seen with probability 1/2: half of it from s1 and half
    // from sx. The same holds for o2 with s2.
    Builder b(5, 2, 5);
    for (std::size_t a = 0; a < 2; ++a) {
        b.t(0, a, 1) = 0.5;
        b.t(0, a, 2) = 0.5;
    }
    b.R(0, 1) = 0.1;
    const std::size_t blends[2] = {0, 2};  // s1' blends s1 with sx, s2' blends s2 with sx
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t a = 0; a < 2; ++a) {
            const TkRow& own = kTkRows[blends[k]][a];
            const TkRow& shared = kTkRows[1][a];
            const double to_s3 = 0.5 * own.to_s3 + 0.5 * shared.to_s3;
            b.t(1 + k, a, 3) = to_s3;
            b.t(1 + k, a, 4) = 1.0 - to_s3;
            b.R(idx(1 + k), idx(a)) = 0.5 * own.reward + 0.5 * shared.reward;
        }
    b.t(3, 0, 4) = b.t(3, 1, 4) = 1.0;
    b.R(3, 0) = 1.0;
    b.R(3, 1) = -1.0;
    b.absorbing(4);
    b.phi.setIdentity();
    b.p0(0) = 1.0;

    PomdpSource src;
    src.name = "tk-collapsed";
    src.pomdp = b.build(0.9);
    src.state_names = {"s0", "s1x", "s2x", "s3", "terminal"};
    src.action_names = {"a0", "a1"};
    src.obs_names = {"o0", "o1", "o2", "o3", "terminal"};
    return src;
}

Pomdp mix_observation(const Pomdp& p, const Matrix& phi_aliased, double mix) {
    if (phi_aliased.rows() != p.phi().rows() || phi_aliased.cols() != p.phi().cols())
        throw DimensionMismatch("aliased observation matrix must match Phi's shape");
    if (!(mix >= 0.0 && mix <= 1.0)) throw Error("mix must lie in [0,1]");
    return p.with_phi((1.0 - mix) * p.phi() + mix * phi_aliased);
}

PomdpSource random_block_mdp(std::size_t n_states, std::size_t n_actions,
                             std::size_t obs_per_state, std::uint64_t seed, double gamma) {
    if (n_states == 0 || n_actions == 0 || obs_per_state == 0)
        throw Error("random block MDP needs positive dimensions");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> reward(-1.0, 1.0);
    const auto random_row = [&](auto&& row) {
        for (Index i = 0; i < row.size(); ++i) row(i) = unit(rng) + 1e-3;
        row /= row.sum();
    };

    Builder b(n_states, n_actions, n_states * obs_per_state);
    for (Index r = 0; r < b.T.rows(); ++r) random_row(b.T.row(r));
    for (Index s = 0; s < b.R.rows(); ++s)
        for (Index a = 0; a < b.R.cols(); ++a) b.R(s, a) = reward(rng);
    for (std::size_t s = 0; s < n_states; ++s)
        random_row(b.phi.row(idx(s)).segment(idx(s * obs_per_state), idx(obs_per_state)));
    random_row(b.p0);

    PomdpSource src;
    src.name = "block-mdp-" + std::to_string(seed);
    src.pomdp = b.build(gamma);
    for (std::size_t s = 0; s < n_states; ++s) src.state_names.push_back("s" + std::to_string(s));
    for (std::size_t a = 0; a < n_actions; ++a) src.action_names.push_back("a" + std::to_string(a));
    for (std::size_t o = 0; o < n_states * obs_per_state; ++o)
        src.obs_names.push_back("o" + std::to_string(o));
    return src;
}

const std::vector<std::string>& fixture_names() {
    static const std::vector<std::string> names = {"tiger",   "paint",   "cheese",
                                                   "network", "shuttle", "4x3"};
    return names;
}

std::string fixture_text(const std::string& name) {
    for (std::size_t i = 0; i < detail::kEmbeddedFixtureCount; ++i)
        if (name == detail::kEmbeddedFixtures[i].name) return detail::kEmbeddedFixtures[i].text;
    throw Error("no bundled POMDP named '" + name + "'");
}

PomdpSource fixture(const std::string& name) {
    PomdpSource src = parse_pomdp(fixture_text(name), name);
    src.origin = Origin::Builtin;
    return src;
}

std::vector<std::string> environment_names() {
    std::vector<std::string> names = {"tmaze", "tmaze-mdp", "parity", "tk-equality", "tk-collapsed"};
    for (const auto& f : fixture_names()) names.push_back(f);
    return names;
}

PomdpSource environment(const std::string& name) {
    if (name == "tmaze") return tmaze();
    if (name == "tmaze-mdp") return tmaze_fully_observable();
    if (name == "parity") return parity_check();
    if (name == "tk-equality") return tk_equality();
    if (name == "tk-collapsed") return tk_equality_collapsed();
    return fixture(name);
}

}  // namespace ldisc

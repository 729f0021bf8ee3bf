#include "ldisc/memory.hpp"

#include "ldisc/errors.hpp"

#include <cmath>
#include <random>

namespace ldisc {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Large enough that exp underflows to exactly zero against a zero logit.
constexpr double kExcludedLogit = -1000.0;

Tensor4 softmax_last(const Tensor4& logits) {
    Tensor4 probs(logits.shape());
    const std::size_t M = logits.dim(3);
    const std::size_t rows = M == 0 ? 0 : logits.size() / M;
    const double* in = logits.data().data();
    double* out = probs.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = in + r * M;
        double* y = out + r * M;
        double mx = x[0];
        for (std::size_t k = 1; k < M; ++k) mx = std::max(mx, x[k]);
        double total = 0.0;
        for (std::size_t k = 0; k < M; ++k) total += (y[k] = std::exp(x[k] - mx));
        for (std::size_t k = 0; k < M; ++k) y[k] /= total;
    }
    return probs;
}

void require_matching(const Pomdp& p, const MemoryFn& mu) {
    if (mu.n_obs() != p.n_obs() || mu.n_actions() != p.n_actions())
        throw DimensionMismatch("memory function is defined over " + std::to_string(mu.n_obs()) +
                                " observations and " + std::to_string(mu.n_actions()) +
                                " actions but the POMDP has " + std::to_string(p.n_obs()) +
                                " and " + std::to_string(p.n_actions()));
    if (mu.n_mem() == 0) throw DimensionMismatch("memory function needs at least one state");
}

}  // namespace

MemoryFn::MemoryFn(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem)
    : MemoryFn(Tensor4({n_obs, n_actions, n_mem, n_mem})) {}

MemoryFn::MemoryFn(Tensor4 logits, std::optional<std::uint64_t> seed)
    : logits_(std::move(logits)), seed_(seed) {
    if (logits_.dim(2) != logits_.dim(3))
        throw DimensionMismatch("memory logits must be O x A x M x M");
    probs_ = softmax_last(logits_);
}

MemoryFn MemoryFn::identity(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem) {
    Tensor4 logits({n_obs, n_actions, n_mem, n_mem}, kExcludedLogit);
    for (std::size_t o = 0; o < n_obs; ++o)
        for (std::size_t a = 0; a < n_actions; ++a)
            for (std::size_t m = 0; m < n_mem; ++m) logits(o, a, m, m) = 0.0;
    return MemoryFn(std::move(logits));
}

MemoryFn random_memory(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem,
                       std::uint64_t seed, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor4 logits({n_obs, n_actions, n_mem, n_mem});
    for (double& x : logits.data()) x = normal(rng);
    return MemoryFn(std::move(logits), seed);
}

MemoryFn memory_argmax(const MemoryFn& mu) {
    const std::size_t M = mu.n_mem();
    Tensor4 logits(mu.logits().shape(), kExcludedLogit);
    for (std::size_t o = 0; o < mu.n_obs(); ++o)
        for (std::size_t a = 0; a < mu.n_actions(); ++a)
            for (std::size_t m = 0; m < M; ++m) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < M; ++k)
                    if (mu.logits()(o, a, m, k) > mu.logits()(o, a, m, best)) best = k;
                logits(o, a, m, best) = 0.0;
            }
    return MemoryFn(std::move(logits), mu.seed());
}

Pomdp augment(const Pomdp& p, const MemoryFn& mu) {
    require_matching(p, mu);
    const std::size_t S = p.n_states(), A = p.n_actions(), O = p.n_obs(), M = mu.n_mem();
    const Matrix& phi = p.phi();

    Matrix T = Matrix::Zero(idx(S * M * A), idx(S * M));
    Matrix R(idx(S * M), idx(A));
    Matrix phi_mu = Matrix::Zero(idx(S * M), idx(O * M));
    Vector p0 = Vector::Zero(idx(S * M));
    std::vector<bool> terminal(S * M);

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t m = 0; m < M; ++m) {
            const std::size_t sm = s * M + m;
            R.row(idx(sm)) = p.rewards().row(idx(s));
            terminal[sm] = p.terminal()[s];
            for (std::size_t o = 0; o < O; ++o) phi_mu(idx(sm), idx(o * M + m)) = phi(idx(s), idx(o));
            for (std::size_t a = 0; a < A; ++a) {
                const Index row = idx(sm * A + a);
                for (std::size_t m2 = 0; m2 < M; ++m2) {
                    // A single memory state is kept exactly at 1 so that the
                    // augmented model reproduces the original bit for bit.
                    double update = M == 1 ? 1.0 : 0.0;
                    if (M > 1)
                        for (std::size_t o = 0; o < O; ++o)
                            update += phi(idx(s), idx(o)) * mu(o, a, m, m2);
                    if (update == 0.0) continue;
                    for (std::size_t s2 = 0; s2 < S; ++s2)
                        T(row, idx(s2 * M + m2)) = p.T(s, a, s2) * update;
                }
            }
        }
        p0(idx(s * M)) = p.p0()(idx(s));
    }
    return Pomdp(std::move(T), std::move(R), std::move(phi_mu), std::move(p0), p.gamma(),
                 std::move(terminal));
}

Policy lift_policy(const Policy& pi, std::size_t n_mem) {
    if (n_mem == 0) throw DimensionMismatch("lift_policy needs at least one memory state");
    const Index O = idx(pi.n_obs()), M = idx(n_mem);
    const auto repeat = [&](const Matrix& m) {
        Matrix out(O * M, m.cols());
        for (Index o = 0; o < O; ++o)
            for (Index k = 0; k < M; ++k) out.row(o * M + k) = m.row(o);
        return out;
    };
    if (pi.logits()) return Policy::from_logits(repeat(*pi.logits()));
    return Policy(repeat(pi.probs()));
}

Tensor4 memory_logits_gradient(const Pomdp& p, const MemoryFn& mu, const Matrix& grad_augmented) {
    require_matching(p, mu);
    const std::size_t S = p.n_states(), A = p.n_actions(), O = p.n_obs(), M = mu.n_mem();
    if (grad_augmented.rows() != idx(S * M * A) || grad_augmented.cols() != idx(S * M))
        throw DimensionMismatch("augmented transition gradient has the wrong shape");

    Tensor4 grad_logits(mu.logits().shape());
    if (M == 1) return grad_logits;

    // d/d mu_S[s, a, m, m'] = sum_s' T[s, a, s'] G[(s,m,a), (s',m')]
    Tensor4 grad_probs(mu.probs().shape());
    std::vector<double> grad_update(M);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t a = 0; a < A; ++a) {
                const Index row = idx((s * M + m) * A + a);
                for (std::size_t m2 = 0; m2 < M; ++m2) {
                    double g = 0.0;
                    for (std::size_t s2 = 0; s2 < S; ++s2)
                        g += p.T(s, a, s2) * grad_augmented(row, idx(s2 * M + m2));
                    grad_update[m2] = g;
                }
                for (std::size_t o = 0; o < O; ++o) {
                    const double w = p.phi()(idx(s), idx(o));
                    if (w == 0.0) continue;
                    for (std::size_t m2 = 0; m2 < M; ++m2) grad_probs(o, a, m, m2) += w * grad_update[m2];
                }
            }

    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t a = 0; a < A; ++a)
            for (std::size_t m = 0; m < M; ++m) {
                double inner = 0.0;
                for (std::size_t k = 0; k < M; ++k) inner += mu(o, a, m, k) * grad_probs(o, a, m, k);
                for (std::size_t k = 0; k < M; ++k)
                    grad_logits(o, a, m, k) = mu(o, a, m, k) * (grad_probs(o, a, m, k) - inner);
            }
    return grad_logits;
}

nlohmann::json to_json(const MemoryFn& mu) {
    nlohmann::json j;
    j["schema"] = "ldisc.memory/1";
    j["n_obs"] = mu.n_obs();
    j["n_actions"] = mu.n_actions();
    j["n_mem"] = mu.n_mem();
    j["logits"] = mu.logits().data();
    j["seed"] = mu.seed() ? nlohmann::json(*mu.seed()) : nlohmann::json(nullptr);
    return j;
}

MemoryFn memory_from_json(const nlohmann::json& j) {
    const auto O = j.at("n_obs").get<std::size_t>();
    const auto A = j.at("n_actions").get<std::size_t>();
    const auto M = j.at("n_mem").get<std::size_t>();
    Tensor4 logits({O, A, M, M});
    auto values = j.at("logits").get<std::vector<double>>();
    if (values.size() != logits.size())
        throw DimensionMismatch("memory JSON holds " + std::to_string(values.size()) +
                                " logits, expected " + std::to_string(logits.size()));
    logits.data() = std::move(values);
    std::optional<std::uint64_t> seed;
    if (j.contains("seed") && !j.at("seed").is_null()) seed = j.at("seed").get<std::uint64_t>();
    return MemoryFn(std::move(logits), seed);
}

}  // namespace ldisc

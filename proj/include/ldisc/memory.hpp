#pragma once

#include "ldisc/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>

namespace ldisc {

/// Stochastic memory function mu(m' | o, a, m), softmax-parametrized over m'.
/// Logits and probabilities are O x A x M x M tensors.
class MemoryFn {
public:
    MemoryFn() = default;
    /// All-zero logits: every transition uniform over memory states.
    MemoryFn(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem);
    explicit MemoryFn(Tensor4 logits, std::optional<std::uint64_t> seed = std::nullopt);

    /// mu(m | o, a, m) = 1: memory is never updated.
    static MemoryFn identity(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem);

    std::size_t n_obs() const noexcept { return logits_.dim(0); }
    std::size_t n_actions() const noexcept { return logits_.dim(1); }
    std::size_t n_mem() const noexcept { return logits_.dim(2); }

    const Tensor4& logits() const noexcept { return logits_; }
    const Tensor4& probs() const noexcept { return probs_; }
    double operator()(std::size_t o, std::size_t a, std::size_t m, std::size_t m_next) const {
        return probs_(o, a, m, m_next);
    }
    /// Seed the logits were drawn from, when known.
    const std::optional<std::uint64_t>& seed() const noexcept { return seed_; }

private:
    Tensor4 logits_;
    Tensor4 probs_;
    std::optional<std::uint64_t> seed_;
};

/// Logits drawn i.i.d. Normal(0, stddev) from a seeded generator.
MemoryFn random_memory(std::size_t n_obs, std::size_t n_actions, std::size_t n_mem,
                       std::uint64_t seed, double stddev = 0.5);

/// Deterministic memory that keeps, for every (o, a, m), only the most likely
/// next memory state (ties go to the lowest index).
MemoryFn memory_argmax(const MemoryFn& mu);

/// Memory Cartesian product. Augmented state (s, m) has index s * M + m and
/// augmented observation (o, m) has index o * M + m:
///   T_mu[(s,m), a, (s',m')] = T[s, a, s'] * sum_o Phi[s, o] mu(m' | o, a, m)
///   Phi_mu[(s,m), (o,m')] = Phi[s, o] [m = m']
/// Rewards are repeated over m, p0 puts all mass on memory state 0, and
/// terminal flags are repeated over m.
Pomdp augment(const Pomdp& p, const MemoryFn& mu);

/// Policy over augmented observations whose rows for (o, m) all equal row o.
Policy lift_policy(const Policy& pi, std::size_t n_mem);

/// Chain rule from the gradient on the augmented (S*M*A) x (S*M) transition
/// matrix to the memory logits.
Tensor4 memory_logits_gradient(const Pomdp& p, const MemoryFn& mu, const Matrix& grad_augmented);

nlohmann::json to_json(const MemoryFn& mu);
MemoryFn memory_from_json(const nlohmann::json& j);

}  // namespace ldisc

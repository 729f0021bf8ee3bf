#pragma once

#include "ldisc/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ldisc {

/// Stochastic-matrix tolerances. Construction-time checks use `construction`,
/// quantities derived by the solver (W rows, effective transitions) use
/// `derived`.
struct Tolerances {
    double construction = 1e-12;
    double derived = 1e-9;
};

/// A finite POMDP held as dense tensors.
///
/// Transitions are stored flattened as an (S*A) x S matrix whose row
/// s*A + a holds T(. | s, a); every (s, a) flattening in the toolkit is
/// action-fastest. Observations follow the Phi(o | s) convention: the
/// observation is emitted by the state the agent currently occupies.
///
/// The constructor only checks shapes. Stochasticity is checked by validate(),
/// so that malformed files can be loaded and reported on.
class Pomdp {
public:
    Pomdp() = default;
    Pomdp(Matrix transitions, Matrix rewards, Matrix phi, Vector p0, double gamma,
          std::vector<bool> terminal);

    std::size_t n_states() const noexcept { return static_cast<std::size_t>(rewards_.rows()); }
    std::size_t n_actions() const noexcept { return static_cast<std::size_t>(rewards_.cols()); }
    std::size_t n_obs() const noexcept { return static_cast<std::size_t>(phi_.cols()); }

    /// T(s' | s, a).
    double T(std::size_t s, std::size_t a, std::size_t s_next) const {
        return transitions_(static_cast<Eigen::Index>(s * n_actions() + a),
                            static_cast<Eigen::Index>(s_next));
    }
    const Matrix& transitions() const noexcept { return transitions_; }
    const Matrix& rewards() const noexcept { return rewards_; }
    const Matrix& phi() const noexcept { return phi_; }
    const Vector& p0() const noexcept { return p0_; }
    double gamma() const noexcept { return gamma_; }
    const std::vector<bool>& terminal() const noexcept { return terminal_; }

    /// Transitions with every outgoing row of a terminal state set to zero.
    /// This is the matrix all solves use; it makes (I - gamma T K) invertible
    /// at gamma = 1 for episodic problems.
    Matrix solve_transitions() const;

    Pomdp with_phi(Matrix phi) const;
    Pomdp with_p0(Vector p0) const;
    Pomdp with_gamma(double gamma) const;
    Pomdp with_transitions(Matrix transitions) const;

private:
    Matrix transitions_;
    Matrix rewards_;
    Matrix phi_;
    Vector p0_;
    double gamma_ = 0.0;
    std::vector<bool> terminal_;
};

/// A stochastic observation-conditioned policy, rows indexed by observation.
class Policy {
public:
    Policy() = default;
    explicit Policy(Matrix probs);

    static Policy from_logits(Matrix logits);
    static Policy uniform(std::size_t n_obs, std::size_t n_actions);

    std::size_t n_obs() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t n_actions() const noexcept { return static_cast<std::size_t>(probs_.cols()); }
    double operator()(std::size_t obs, std::size_t action) const {
        return probs_(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(action));
    }
    const Matrix& probs() const noexcept { return probs_; }
    const std::optional<Matrix>& logits() const noexcept { return logits_; }

private:
    Matrix probs_;
    std::optional<Matrix> logits_;
};

/// Policy whose logits are drawn i.i.d. Normal(0, stddev) from a seeded
/// generator.
Policy random_policy(std::size_t n_obs, std::size_t n_actions, std::uint64_t seed,
                     double stddev = 0.5);

/// Tensors derived from a (POMDP, policy) pair.
struct PolicyTensors {
    Tensor3 Pi;          // O x O x A, diagonal in the first two indices
    Tensor3 PiS;         // S x S x A, diagonal in the first two indices
    Matrix W;            // O x S, Pr(s | o)
    Tensor3 WPi;         // O x S x A, W(o, s) * pi(a | o)
    Vector obs_occupancy;             // discounted, unnormalized
    std::vector<bool> reachable_obs;  // false where the occupancy is zero
};

PolicyTensors policy_tensors(const Pomdp& p, const Policy& pi);

struct ValidationIssue {
    std::string check;    // e.g. "T_row_sum"
    std::string message;  // human-readable, names the offending index
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const noexcept { return issues.empty(); }
    /// First issue per check kind, in order of discovery.
    std::string summary() const;
};

ValidationReport validate(const Pomdp& p, const Tolerances& tol = {});
ValidationReport validate(const Policy& pi, const Tolerances& tol = {});

/// Throws InvalidModel naming the first failure.
void require_valid(const Pomdp& p, const Tolerances& tol = {});
/// Throws InvalidModel or DimensionMismatch.
void require_compatible(const Pomdp& p, const Policy& pi, const Tolerances& tol = {});

/// True when every observation is emitted by at most one state (block MDP).
bool is_block_mdp(const Pomdp& p);

}  // namespace ldisc

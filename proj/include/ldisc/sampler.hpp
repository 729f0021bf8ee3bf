#pragma once

#include "ldisc/solver.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace ldisc {

struct Step {
    std::size_t obs = 0;
    std::size_t action = 0;
    double reward = 0.0;
};

/// One sampled episode. An episode ends when it enters a terminal state
/// (`terminated`) or after `horizon` steps (`truncated`). A truncated episode
/// also records the observation and action drawn at the cut, which the
/// estimators bootstrap from.
struct Trajectory {
    std::vector<Step> steps;
    bool terminated = false;
    bool truncated = false;
    std::optional<std::pair<std::size_t, std::size_t>> cut;  // (obs, action) after the last step
    std::uint64_t seed = 0;
};

/// Samples s0 ~ p0, o ~ Phi(. | s), a ~ pi(. | o), s' ~ T(. | s, a) with reward
/// R(s, a). Every episode has its own generator seeded from (seed, index), so
/// the result depends only on the arguments.
std::vector<Trajectory> simulate(const Pomdp& p, const Policy& pi, std::size_t n_episodes,
                                 std::size_t horizon, std::uint64_t seed);

/// gamma^horizon * max|R| / (1 - gamma): bound on the return mass lost by
/// cutting episodes at `horizon`. Infinite for gamma = 1.
double truncation_bias_bound(const Pomdp& p, std::size_t horizon);

/// Smallest horizon whose truncation bound is at most `tolerance`, capped at
/// `cap` (also used when gamma = 1).
std::size_t horizon_for(const Pomdp& p, double tolerance = 1e-6, std::size_t cap = 10000);

/// Exact propagation of the state distribution: sum_{t < horizon} gamma^t
/// Pr(s_t = s) on the transitions used by the solver (terminal rows zeroed).
Vector propagate_occupancy(const Pomdp& p, const Policy& pi, std::size_t horizon);

/// Time weighting of every visit in the sample estimators. Discounted visits
/// (gamma^t) target the discounted occupancy the closed-form solver uses;
/// undiscounted visits weight every step equally.
enum class VisitWeighting { Undiscounted, Discounted };

std::string to_string(VisitWeighting w);
VisitWeighting visit_weighting_from_string(const std::string& name);

struct EstimatorOptions {
    VisitWeighting weighting = VisitWeighting::Undiscounted;
    double tolerance = 1e-6;  // sup-norm change that stops the iteration
    std::size_t max_iterations = 100000;
};

struct QEstimate {
    Matrix values;                // O x A, zero where unvisited
    Matrix visit_weight;          // O x A, summed visit weights
    std::vector<bool> visited;    // O * A, row-major
    double lambda = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Every-visit average of offline lambda-returns per (o, a). The returns
/// bootstrap from the current estimate at the next sampled pair (and at the
/// cut of truncated episodes); the estimate is recomputed against itself
/// until the sup-norm change drops below the tolerance.
QEstimate estimate_q_lambda(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                            std::size_t n_actions, double lambda, double gamma,
                            const EstimatorOptions& options = {});

struct LdEstimate {
    double discrepancy = 0.0;
    QEstimate q1, q2;
    Matrix weights;  // O x A norm weights over visited pairs
};

/// Sample lambda-discrepancy over visited pairs. Occupancy-weighted norms use
/// the normalized visit weights; the policy-weighted norm uses the empirical
/// action frequencies per observation.
LdEstimate estimate_ld(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                       std::size_t n_actions, const DiscrepancySpec& spec, double gamma,
                       const EstimatorOptions& options = {});

struct BootstrapOptions {
    std::size_t replicates = 200;
    std::uint64_t seed = 0;
};

/// Standard deviations over bootstrap replicates that resample whole episodes
/// with replacement.
struct BootstrapResult {
    Matrix q1_std, q2_std;  // O x A
    double discrepancy_std = 0.0;
    std::size_t replicates = 0;
};

BootstrapResult bootstrap_ld(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                             std::size_t n_actions, const DiscrepancySpec& spec, double gamma,
                             const EstimatorOptions& options = {},
                             const BootstrapOptions& boot = {});

struct SampleCheckOptions {
    std::size_t episodes = 100000;
    std::size_t horizon = 0;  // 0 picks horizon_for(p)
    std::uint64_t seed = 0;
    std::size_t replicates = 200;
    VisitWeighting weighting = VisitWeighting::Discounted;
};

struct PairCheck {
    std::size_t obs = 0, action = 0;
    double lambda = 0.0;
    double closed_form = 0.0;
    double estimate = 0.0;
    double std = 0.0;
    double visit_weight = 0.0;
    bool within_3sigma = false;
};

struct SampleCheckReport {
    double closed_form = 0.0;
    double sampled = 0.0;
    double relative_error = 0.0;  // |sampled - closed| / closed, infinite when closed = 0
    double sampled_std = 0.0;
    /// The sampled discrepancy is within three bootstrap noise floors of zero.
    bool consistent_with_zero = false;
    std::vector<PairCheck> pairs;  // visited pairs, both lambdas
    double fraction_within_3sigma = 0.0;
    std::size_t unvisited_pairs = 0;
    std::size_t episodes = 0;
    std::size_t horizon = 0;
    std::size_t truncated_episodes = 0;
    double truncation_bias_bound = 0.0;
};

/// Simulates, estimates and bootstraps, then compares against the solver.
SampleCheckReport sample_check(const Pomdp& p, const Policy& pi, const DiscrepancySpec& spec,
                               const SampleCheckOptions& options = {});

nlohmann::json to_json(const SampleCheckReport& report);

/// One JSON object per line: {"episode", "seed", "terminated", "truncated",
/// "steps": [[obs, action, reward], ...]}.
void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajs);

}  // namespace ldisc

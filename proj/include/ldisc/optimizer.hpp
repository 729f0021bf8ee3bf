#pragma once

#include "ldisc/memory.hpp"
#include "ldisc/solver.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ldisc {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam on a flat parameter vector. step() descends along the gradient.
class Adam {
public:
    Adam(std::size_t n_params, double step_size, AdamParams params = {});
    void step(std::vector<double>& x, const std::vector<double>& grad);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    double step_size_;
    AdamParams params_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

struct OptimConfig {
    std::size_t n_random_policies = 100;
    std::size_t mem_steps = 20000;
    std::size_t policy_steps = 10000;
    double step_size = 0.01;         // memory logits
    double policy_step_size = 0.01;  // policy logits
    AdamParams adam;
    std::uint64_t seed = 0;
    DiscrepancySpec discrepancy;  // lambdas (0, 1), policy-weighted L2

    /// Throws Error when a count is zero or a step size is not positive.
    /// A zero policy step size is allowed (it leaves the policy unchanged).
    void check() const;
};

/// Objective value and gradient with respect to a flat parameter vector.
struct GradientReport {
    double objective = 0.0;       // the differentiated quantity
    double discrepancy = 0.0;     // Lambda with the square root (memory objective only)
    std::vector<double> grad;     // same layout as the parameters
    std::vector<std::size_t> shape;
    std::optional<double> fd_max_rel_err;  // set by the checking variants
};

/// Squared lambda-discrepancy of augment(p, mu) under pi_mu, and its gradient
/// with respect to the memory logits (row-major O x A x M x M).
GradientReport ld_objective_and_gradient(const Pomdp& p, const MemoryFn& mu, const Policy& pi_mu,
                                         const DiscrepancySpec& spec);

/// Start value J = sum_s p0(s) V(s) and its gradient with respect to the
/// policy logits (row-major O x A).
GradientReport start_value_objective_and_gradient(const Pomdp& p, const Matrix& logits);

struct FiniteDifferenceCheck {
    double max_rel_err = 0.0;
    std::size_t checked = 0;      // entries with |grad| above the threshold
    std::size_t worst_index = 0;
};

/// Central differences f(x + h e_i) - f(x - h e_i) / 2h against `grad`, on the
/// entries where |grad| > threshold. Relative error is
/// |grad - fd| / max(|grad|, |fd|).
FiniteDifferenceCheck finite_difference_check(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
    const std::vector<double>& grad, double h = 1e-5, double threshold = 1e-8);

/// ld_objective_and_gradient with fd_max_rel_err filled in. The finite
/// differences evaluate an independent extended-precision implementation of
/// the objective, so rounding noise stays far below small gradient entries.
GradientReport check_ld_gradient(const Pomdp& p, const MemoryFn& mu, const Policy& pi_mu,
                                 const DiscrepancySpec& spec, double h = 1e-5);
/// start_value_objective_and_gradient with fd_max_rel_err filled in.
GradientReport check_start_value_gradient(const Pomdp& p, const Matrix& logits, double h = 1e-5);

/// Outcome of an optimization loop. `trace` holds the tracked quantity before
/// every update plus its final value (steps + 1 entries unless it failed).
struct RunStatus {
    bool failed = false;
    std::size_t failed_step = 0;
    std::string failure;
};

struct MemoryRun {
    MemoryFn memory;
    std::vector<double> trace;  // Lambda (with the root)
    RunStatus status;
};

/// Adam descent on the memory logits of the squared discrepancy, with the
/// policy held fixed. On numerical failure returns the best memory seen.
MemoryRun improve_memory(const Pomdp& p, const MemoryFn& mu0, const Policy& pi_mu,
                         const OptimConfig& cfg);

struct PolicyRun {
    Policy policy;
    std::vector<double> trace;  // start value J
    RunStatus status;
};

/// Adam ascent on the policy logits of the closed-form start value.
PolicyRun policy_gradient_improve(const Pomdp& p, const Matrix& logits0, const OptimConfig& cfg);

struct PolicySearch {
    Policy policy;
    std::size_t index = 0;
    std::vector<double> discrepancies;
};

/// Draws n Normal(0, 0.5) logit policies and keeps the one with the largest
/// discrepancy (first one on ties).
PolicySearch policy_search(const Pomdp& p, std::size_t n, const DiscrepancySpec& spec,
                           std::uint64_t seed);

struct ValueImprovementResult {
    std::size_t n_mem = 1;
    bool pre_augment = false;
    Policy policy;     // over O * M observations
    MemoryFn initial_memory;
    MemoryFn memory;
    std::size_t search_index = 0;
    double initial_discrepancy = 0.0;  // searched policy, initial memory
    double final_discrepancy = 0.0;    // searched policy, optimized memory
    double initial_start_value = 0.0;  // searched policy, optimized memory
    double final_start_value = 0.0;    // improved policy, optimized memory
    std::vector<double> search_discrepancies;
    std::vector<double> memory_trace;
    std::vector<double> policy_trace;
    RunStatus status;
    std::string failed_stage;  // "memory" or "policy" when status.failed
};

/// Policy search, lift over memory, memory improvement, augmentation, and
/// policy improvement. With pre_augment, the POMDP is first augmented with the
/// initial random memory and the policy search runs over augmented
/// observations.
ValueImprovementResult optimize_with_value_improvement(const Pomdp& p, std::size_t n_mem,
                                                       const OptimConfig& cfg,
                                                       bool pre_augment = false);

/// Seed of an independent stream derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

nlohmann::json to_json(const OptimConfig& cfg);
nlohmann::json to_json(const ValueImprovementResult& result, bool include_traces = true);

}  // namespace ldisc

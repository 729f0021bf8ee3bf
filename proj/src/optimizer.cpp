#include "ldisc/optimizer.hpp"

#include "extended_objective.hpp"
#include "ldisc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ldisc {

namespace {

using Eigen::Index;

std::vector<double> flatten(const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return out;
}

Matrix unflatten(const std::vector<double>& v, Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    return m;
}

void require_finite(const std::vector<double>& grad, const char* what) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NumericalFailure(std::string("non-finite ") + what + " gradient at index " +
                                       std::to_string(i),
                                   i);
}

MemoryFn with_logits(const MemoryFn& mu, const std::vector<double>& values) {
    Tensor4 logits(mu.logits().shape());
    logits.data() = values;
    return MemoryFn(std::move(logits), mu.seed());
}

Matrix random_logits(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 0.5);
    Matrix logits(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < logits.rows(); ++r)
        for (Index c = 0; c < logits.cols(); ++c) logits(r, c) = normal(rng);
    return logits;
}

}  // namespace

Adam::Adam(std::size_t n_params, double step_size, AdamParams params)
    : step_size_(step_size), params_(params), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::step(std::vector<double>& x, const std::vector<double>& grad) {
    if (x.size() != m_.size() || grad.size() != m_.size())
        throw DimensionMismatch("Adam parameter and gradient sizes differ");
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
        m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * grad[i];
        v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        x[i] -= step_size_ * m_hat / (std::sqrt(v_hat) + params_.eps);
    }
}

void OptimConfig::check() const {
    if (n_random_policies == 0) throw Error("n_random_policies must be at least 1");
    if (mem_steps == 0) throw Error("mem_steps must be at least 1");
    if (policy_steps == 0) throw Error("policy_steps must be at least 1");
    if (!(step_size > 0.0)) throw Error("step_size must be positive");
    if (!(policy_step_size >= 0.0)) throw Error("policy_step_size must be non-negative");
}

GradientReport ld_objective_and_gradient(const Pomdp& p, const MemoryFn& mu, const Policy& pi_mu,
                                         const DiscrepancySpec& spec) {
    const Pomdp augmented = augment(p, mu);
    const DiscrepancyAdjoint adj = discrepancy_adjoint(augmented, pi_mu, spec);
    const Tensor4 grad = memory_logits_gradient(p, mu, adj.grad_transitions);

    GradientReport report;
    report.objective = adj.squared;
    report.discrepancy = adj.discrepancy;
    report.grad = grad.data();
    report.shape.assign(grad.shape().begin(), grad.shape().end());
    require_finite(report.grad, "memory");
    return report;
}

GradientReport start_value_objective_and_gradient(const Pomdp& p, const Matrix& logits) {
    const Policy pi = Policy::from_logits(logits);
    const StartValueGradient g = start_value_gradient(p, pi);
    GradientReport report;
    report.objective = g.value;
    report.grad = flatten(row_softmax_backward(pi.probs(), g.grad_probs));
    report.shape = {static_cast<std::size_t>(logits.rows()), static_cast<std::size_t>(logits.cols())};
    require_finite(report.grad, "policy");
    return report;
}

FiniteDifferenceCheck finite_difference_check(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
    const std::vector<double>& grad, double h, double threshold) {
    if (grad.size() != x.size()) throw DimensionMismatch("gradient and parameter sizes differ");
    FiniteDifferenceCheck out;
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(std::abs(grad[i]) > threshold)) continue;
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        const double fd = (up - down) / (2.0 * h);
        const double err = std::abs(grad[i] - fd) / std::max(std::abs(grad[i]), std::abs(fd));
        ++out.checked;
        if (err > out.max_rel_err || !std::isfinite(err)) {
            out.max_rel_err = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
            out.worst_index = i;
        }
    }
    return out;
}

namespace {

// Central differences of an extended-precision objective.
template <typename F>
double extended_fd_max_rel_err(const F& f, const std::vector<double>& x,
                               const std::vector<double>& grad, double h) {
    std::vector<detail::Real> probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(std::abs(grad[i]) > 1e-8)) continue;
        const detail::Real base = probe[i];
        probe[i] = base + h;
        const detail::Real up = f(probe);
        probe[i] = base - h;
        const detail::Real down = f(probe);
        probe[i] = base;
        const double fd = static_cast<double>((up - down) / (2 * detail::Real(h)));
        const double err = std::abs(grad[i] - fd) / std::max(std::abs(grad[i]), std::abs(fd));
        worst = std::isfinite(err) ? std::max(worst, err) : std::numeric_limits<double>::infinity();
    }
    return worst;
}

}  // namespace

GradientReport check_ld_gradient(const Pomdp& p, const MemoryFn& mu, const Policy& pi_mu,
                                 const DiscrepancySpec& spec, double h) {
    GradientReport report = ld_objective_and_gradient(p, mu, pi_mu, spec);
    const detail::RMatrix pi = pi_mu.probs().cast<detail::Real>();
    const auto f = [&](const std::vector<detail::Real>& x) {
        return detail::extended_squared_discrepancy(detail::extended_augment(p, mu.n_mem(), x), pi,
                                                    spec);
    };
    report.fd_max_rel_err = extended_fd_max_rel_err(f, mu.logits().data(), report.grad, h);
    return report;
}

GradientReport check_start_value_gradient(const Pomdp& p, const Matrix& logits, double h) {
    GradientReport report = start_value_objective_and_gradient(p, logits);
    const detail::ExtendedModel model = detail::extended_model(p);
    const auto f = [&](const std::vector<detail::Real>& x) {
        detail::RMatrix l(logits.rows(), logits.cols());
        for (Index r = 0; r < l.rows(); ++r)
            for (Index c = 0; c < l.cols(); ++c) l(r, c) = x[static_cast<std::size_t>(r * l.cols() + c)];
        return detail::extended_start_value(model, detail::softmax_rows(l));
    };
    report.fd_max_rel_err = extended_fd_max_rel_err(f, flatten(logits), report.grad, h);
    return report;
}

MemoryRun improve_memory(const Pomdp& p, const MemoryFn& mu0, const Policy& pi_mu,
                         const OptimConfig& cfg) {
    cfg.check();
    MemoryRun run;
    std::vector<double> params = mu0.logits().data();
    std::vector<double> best = params;
    double best_objective = std::numeric_limits<double>::infinity();
    Adam adam(params.size(), cfg.step_size, cfg.adam);
    run.trace.reserve(cfg.mem_steps + 1);

    for (std::size_t step = 0; step <= cfg.mem_steps; ++step) {
        GradientReport report;
        try {
            report = ld_objective_and_gradient(p, with_logits(mu0, params), pi_mu, cfg.discrepancy);
        } catch (const Error& e) {
            run.status = {true, step, e.what()};
            run.memory = with_logits(mu0, best);
            return run;
        }
        run.trace.push_back(report.discrepancy);
        if (report.objective < best_objective) {
            best_objective = report.objective;
            best = params;
        }
        if (step == cfg.mem_steps) break;
        adam.step(params, report.grad);
    }
    run.memory = with_logits(mu0, params);
    return run;
}

PolicyRun policy_gradient_improve(const Pomdp& p, const Matrix& logits0, const OptimConfig& cfg) {
    cfg.check();
    PolicyRun run;
    const Index rows = logits0.rows(), cols = logits0.cols();
    std::vector<double> params = flatten(logits0);
    std::vector<double> best = params;
    double best_value = -std::numeric_limits<double>::infinity();
    Adam adam(params.size(), cfg.policy_step_size, cfg.adam);
    run.trace.reserve(cfg.policy_steps + 1);

    for (std::size_t step = 0; step <= cfg.policy_steps; ++step) {
        GradientReport report;
        try {
            report = start_value_objective_and_gradient(p, unflatten(params, rows, cols));
        } catch (const Error& e) {
            run.status = {true, step, e.what()};
            run.policy = Policy::from_logits(unflatten(best, rows, cols));
            return run;
        }
        run.trace.push_back(report.objective);
        if (report.objective > best_value) {
            best_value = report.objective;
            best = params;
        }
        if (step == cfg.policy_steps) break;
        for (double& g : report.grad) g = -g;  // ascent
        adam.step(params, report.grad);
    }
    run.policy = Policy::from_logits(unflatten(params, rows, cols));
    return run;
}

PolicySearch policy_search(const Pomdp& p, std::size_t n, const DiscrepancySpec& spec,
                           std::uint64_t seed) {
    if (n == 0) throw Error("policy search needs at least one policy");
    std::mt19937_64 rng(seed);
    PolicySearch out;
    out.discrepancies.reserve(n);
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        Policy pi = Policy::from_logits(random_logits(p.n_obs(), p.n_actions(), rng));
        const double ld = lambda_discrepancy(p, pi, spec);
        out.discrepancies.push_back(ld);
        if (ld > best) {
            best = ld;
            out.index = i;
            out.policy = std::move(pi);
        }
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::mt19937_64 rng(seq);
    return rng();
}

ValueImprovementResult optimize_with_value_improvement(const Pomdp& p, std::size_t n_mem,
                                                       const OptimConfig& cfg, bool pre_augment) {
    cfg.check();
    if (n_mem == 0) throw Error("n_mem must be at least 1");
    ValueImprovementResult result;
    result.n_mem = n_mem;
    result.pre_augment = pre_augment;
    result.initial_memory =
        random_memory(p.n_obs(), p.n_actions(), n_mem, derive_seed(cfg.seed, 1));

    const std::uint64_t search_seed = derive_seed(cfg.seed, 0);
    Policy pi_mu;
    if (pre_augment) {
        const Pomdp augmented = augment(p, result.initial_memory);
        PolicySearch search =
            policy_search(augmented, cfg.n_random_policies, cfg.discrepancy, search_seed);
        result.search_index = search.index;
        result.search_discrepancies = std::move(search.discrepancies);
        pi_mu = std::move(search.policy);
    } else {
        PolicySearch search = policy_search(p, cfg.n_random_policies, cfg.discrepancy, search_seed);
        result.search_index = search.index;
        result.search_discrepancies = std::move(search.discrepancies);
        pi_mu = lift_policy(search.policy, n_mem);
    }

    MemoryRun mem = improve_memory(p, result.initial_memory, pi_mu, cfg);
    result.memory = mem.memory;
    result.memory_trace = std::move(mem.trace);
    if (!result.memory_trace.empty()) {
        result.initial_discrepancy = result.memory_trace.front();
        result.final_discrepancy = result.memory_trace.back();
    }
    if (mem.status.failed) {
        result.status = mem.status;
        result.failed_stage = "memory";
        result.policy = pi_mu;
        return result;
    }

    const Pomdp augmented = augment(p, result.memory);
    PolicyRun pol = policy_gradient_improve(augmented, *pi_mu.logits(), cfg);
    result.policy = pol.policy;
    result.policy_trace = std::move(pol.trace);
    if (!result.policy_trace.empty()) {
        result.initial_start_value = result.policy_trace.front();
        result.final_start_value = result.policy_trace.back();
    }
    if (pol.status.failed) {
        result.status = pol.status;
        result.failed_stage = "policy";
    }
    return result;
}

nlohmann::json to_json(const OptimConfig& cfg) {
    return {
        {"n_random_policies", cfg.n_random_policies},
        {"mem_steps", cfg.mem_steps},
        {"policy_steps", cfg.policy_steps},
        {"step_size", cfg.step_size},
        {"policy_step_size", cfg.policy_step_size},
        {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
        {"seed", cfg.seed},
        {"discrepancy",
         {{"lambda1", cfg.discrepancy.lambda1},
          {"lambda2", cfg.discrepancy.lambda2},
          {"norm", to_string(cfg.discrepancy.norm)}}},
    };
}

nlohmann::json to_json(const ValueImprovementResult& r, bool include_traces) {
    nlohmann::json j = {
        {"n_mem", r.n_mem},
        {"pre_augment", r.pre_augment},
        {"search_index", r.search_index},
        {"initial_discrepancy", r.initial_discrepancy},
        {"final_discrepancy", r.final_discrepancy},
        {"initial_start_value", r.initial_start_value},
        {"final_start_value", r.final_start_value},
        {"failed", r.status.failed},
        {"initial_memory", to_json(r.initial_memory)},
        {"memory", to_json(r.memory)},
        {"policy_logits", r.policy.logits() ? flatten(*r.policy.logits()) : std::vector<double>{}},
        {"policy_probs", flatten(r.policy.probs())},
        {"policy_shape", {r.policy.n_obs(), r.policy.n_actions()}},
    };
    if (r.status.failed) {
        j["failed_stage"] = r.failed_stage;
        j["failed_step"] = r.status.failed_step;
        j["failure"] = r.status.failure;
    }
    if (include_traces) {
        j["search_discrepancies"] = r.search_discrepancies;
        j["memory_trace"] = r.memory_trace;
        j["policy_trace"] = r.policy_trace;
    }
    return j;
}

}  // namespace ldisc

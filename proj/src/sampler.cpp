#include "ldisc/sampler.hpp"

#include "ldisc/errors.hpp"
#include "ldisc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace ldisc {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Cumulative sums of the rows of a row-stochastic matrix.
class RowSampler {
public:
    explicit RowSampler(const Matrix& m) : cols_(static_cast<std::size_t>(m.cols())) {
        cum_.resize(static_cast<std::size_t>(m.size()));
        for (Index r = 0; r < m.rows(); ++r) {
            double total = 0.0;
            for (Index c = 0; c < m.cols(); ++c)
                cum_[static_cast<std::size_t>(r) * cols_ + static_cast<std::size_t>(c)] = total += m(r, c);
        }
    }

    std::size_t draw(std::size_t row, double u) const {
        const double* begin = cum_.data() + row * cols_;
        const double total = begin[cols_ - 1];
        const double target = u * total;
        // First entry whose cumulative sum exceeds the target; zero-probability
        // entries repeat the previous sum and can never be that entry.
        std::size_t k = 0;
        while (k + 1 < cols_ && !(target < begin[k])) ++k;
        return k;
    }

private:
    std::size_t cols_;
    std::vector<double> cum_;
};

// Per-lambda sums over visits: W[x] visit weight, B[x] reward part of the
// lambda-return, M[x, y] coefficient of Q(y) in the lambda-return.
struct Accumulator {
    Vector W, B;
    Matrix M;
    explicit Accumulator(std::size_t X)
        : W(Vector::Zero(idx(X))), B(Vector::Zero(idx(X))), M(Matrix::Zero(idx(X), idx(X))) {}
};

void accumulate(const Trajectory& traj, std::size_t n_actions, double lambda, double gamma,
                VisitWeighting weighting, double mult, Accumulator& acc, Vector& c) {
    const std::size_t n = traj.steps.size();
    if (n == 0) return;
    const auto pair = [&](const Step& s) { return idx(s.obs * n_actions + s.action); };
    double g = 0.0;
    c.setZero();
    for (std::size_t k = n; k-- > 0;) {
        const Step& step = traj.steps[k];
        if (k == n - 1) {
            g = step.reward;
            if (traj.truncated && traj.cut)
                c(idx(traj.cut->first * n_actions + traj.cut->second)) = gamma;
        } else {
            g = step.reward + gamma * lambda * g;
            c *= gamma * lambda;
            c(pair(traj.steps[k + 1])) += gamma * (1.0 - lambda);
        }
        const double w =
            mult * (weighting == VisitWeighting::Discounted ? std::pow(gamma, static_cast<double>(k)) : 1.0);
        if (w == 0.0) continue;
        const Index x = pair(step);
        acc.W(x) += w;
        acc.B(x) += w * g;
        acc.M.row(x) += w * c.transpose();
    }
}

QEstimate solve_accumulated(const Accumulator& acc, std::size_t n_obs, std::size_t n_actions,
                            double lambda, const EstimatorOptions& options) {
    const Index X = acc.W.size();
    QEstimate est;
    est.lambda = lambda;
    est.visited.assign(static_cast<std::size_t>(X), false);
    Vector b = Vector::Zero(X);
    Matrix M = Matrix::Zero(X, X);
    for (Index x = 0; x < X; ++x) {
        if (!(acc.W(x) > 0.0)) continue;
        est.visited[static_cast<std::size_t>(x)] = true;
        b(x) = acc.B(x) / acc.W(x);
        M.row(x) = acc.M.row(x) / acc.W(x);
    }
    Vector q = Vector::Zero(X);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        Vector next = b + M * q;
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        est.iterations = it + 1;
        if (!std::isfinite(change)) break;
        if (change < options.tolerance) {
            est.converged = true;
            break;
        }
    }
    est.values = Matrix(idx(n_obs), idx(n_actions));
    est.visit_weight = Matrix(idx(n_obs), idx(n_actions));
    for (std::size_t o = 0; o < n_obs; ++o)
        for (std::size_t a = 0; a < n_actions; ++a) {
            est.values(idx(o), idx(a)) = q(idx(o * n_actions + a));
            est.visit_weight(idx(o), idx(a)) = acc.W(idx(o * n_actions + a));
        }
    return est;
}

Matrix norm_weights(const QEstimate& q, NormKind norm) {
    const Matrix& v = q.visit_weight;
    Matrix w = Matrix::Zero(v.rows(), v.cols());
    if (norm == NormKind::OccupancyWeightedL2 || norm == NormKind::OccupancyWeightedMax) {
        const double total = v.sum();
        if (total > 0.0) w = v / total;
    } else {
        for (Index o = 0; o < v.rows(); ++o) {
            const double total = v.row(o).sum();
            if (total > 0.0) w.row(o) = v.row(o) / total;
        }
    }
    return w;
}

double weighted_norm(const Matrix& delta, const Matrix& w, NormKind norm) {
    double out = 0.0;
    for (Index o = 0; o < delta.rows(); ++o)
        for (Index a = 0; a < delta.cols(); ++a) {
            if (!(w(o, a) > 0.0)) continue;
            if (norm == NormKind::OccupancyWeightedMax)
                out = std::max(out, std::abs(delta(o, a)));
            else
                out += w(o, a) * delta(o, a) * delta(o, a);
        }
    return norm == NormKind::OccupancyWeightedMax ? out : std::sqrt(out);
}

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw Error("lambda must lie in [0,1], got " + std::to_string(lambda));
}

}  // namespace

std::vector<Trajectory> simulate(const Pomdp& p, const Policy& pi, std::size_t n_episodes,
                                 std::size_t horizon, std::uint64_t seed) {
    if (horizon == 0) throw Error("horizon must be at least 1");
    require_compatible(p, pi);
    const std::size_t A = p.n_actions();
    const RowSampler start(p.p0().transpose());
    const RowSampler emit(p.phi());
    const RowSampler act(pi.probs());
    const RowSampler move(p.transitions());
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Trajectory> out(n_episodes);
    for (std::size_t e = 0; e < n_episodes; ++e) {
        Trajectory& traj = out[e];
        traj.seed = derive_seed(seed, e);
        std::mt19937_64 rng(traj.seed);
        std::size_t s = start.draw(0, unit(rng));
        for (std::size_t t = 0;; ++t) {
            const std::size_t o = emit.draw(s, unit(rng));
            const std::size_t a = act.draw(o, unit(rng));
            if (t == horizon) {
                traj.truncated = true;
                traj.cut = std::make_pair(o, a);
                break;
            }
            traj.steps.push_back({o, a, p.rewards()(idx(s), idx(a))});
            if (p.terminal()[s]) {
                traj.terminated = true;
                break;
            }
            s = move.draw(s * A + a, unit(rng));
        }
    }
    return out;
}

double truncation_bias_bound(const Pomdp& p, std::size_t horizon) {
    if (p.gamma() >= 1.0) return std::numeric_limits<double>::infinity();
    const double rmax = p.rewards().size() ? p.rewards().cwiseAbs().maxCoeff() : 0.0;
    return std::pow(p.gamma(), static_cast<double>(horizon)) * rmax / (1.0 - p.gamma());
}

std::size_t horizon_for(const Pomdp& p, double tolerance, std::size_t cap) {
    if (p.gamma() >= 1.0) return cap;
    std::size_t h = 1;
    while (h < cap && truncation_bias_bound(p, h) > tolerance) ++h;
    return h;
}

Vector propagate_occupancy(const Pomdp& p, const Policy& pi, std::size_t horizon) {
    require_compatible(p, pi);
    const Index S = idx(p.n_states()), A = idx(p.n_actions());
    const Matrix T = p.solve_transitions();
    const Matrix P = p.phi() * pi.probs();
    Matrix Tpi = Matrix::Zero(S, S);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) Tpi.row(s) += P(s, a) * T.row(s * A + a);
    const Matrix step = Tpi.transpose();
    Vector d = p.p0();
    Vector total = Vector::Zero(S);
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        total += discount * d;
        d = step * d;
        discount *= p.gamma();
    }
    return total;
}

std::string to_string(VisitWeighting w) {
    return w == VisitWeighting::Discounted ? "discounted" : "undiscounted";
}

VisitWeighting visit_weighting_from_string(const std::string& name) {
    if (name == "discounted") return VisitWeighting::Discounted;
    if (name == "undiscounted") return VisitWeighting::Undiscounted;
    throw Error("unknown visit weighting '" + name + "'");
}

QEstimate estimate_q_lambda(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                            std::size_t n_actions, double lambda, double gamma,
                            const EstimatorOptions& options) {
    check_lambda(lambda);
    const std::size_t X = n_obs * n_actions;
    Accumulator acc(X);
    Vector c(idx(X));
    for (const Trajectory& traj : trajs) {
        for (const Step& s : traj.steps)
            if (s.obs >= n_obs || s.action >= n_actions)
                throw DimensionMismatch("trajectory step outside the given observation/action counts");
        accumulate(traj, n_actions, lambda, gamma, options.weighting, 1.0, acc, c);
    }
    return solve_accumulated(acc, n_obs, n_actions, lambda, options);
}

LdEstimate estimate_ld(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                       std::size_t n_actions, const DiscrepancySpec& spec, double gamma,
                       const EstimatorOptions& options) {
    LdEstimate out;
    out.q1 = estimate_q_lambda(trajs, n_obs, n_actions, spec.lambda1, gamma, options);
    out.q2 = spec.lambda1 == spec.lambda2
                 ? out.q1
                 : estimate_q_lambda(trajs, n_obs, n_actions, spec.lambda2, gamma, options);
    out.weights = norm_weights(out.q1, spec.norm);
    out.discrepancy = weighted_norm(out.q1.values - out.q2.values, out.weights, spec.norm);
    return out;
}

BootstrapResult bootstrap_ld(const std::vector<Trajectory>& trajs, std::size_t n_obs,
                             std::size_t n_actions, const DiscrepancySpec& spec, double gamma,
                             const EstimatorOptions& options, const BootstrapOptions& boot) {
    check_lambda(spec.lambda1);
    check_lambda(spec.lambda2);
    const std::size_t X = n_obs * n_actions, n = trajs.size();
    BootstrapResult out;
    out.replicates = boot.replicates;
    out.q1_std = out.q2_std = Matrix::Zero(idx(n_obs), idx(n_actions));
    if (n == 0 || boot.replicates < 2) return out;

    // Per-pair running sums of q1, q2 and q1 - q2 over the replicates where
    // the pair was visited.
    Matrix sum = Matrix::Zero(idx(X), 2), sum_sq = Matrix::Zero(idx(X), 2);
    Vector hits = Vector::Zero(idx(X));
    double ld_sum = 0.0, ld_sq = 0.0;

    std::mt19937_64 rng(derive_seed(boot.seed, 0xb007));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::uint32_t> counts(n);
    Vector c(idx(X));
    for (std::size_t r = 0; r < boot.replicates; ++r) {
        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) ++counts[pick(rng)];
        Accumulator acc1(X), acc2(X);
        for (std::size_t e = 0; e < n; ++e) {
            if (!counts[e]) continue;
            accumulate(trajs[e], n_actions, spec.lambda1, gamma, options.weighting, counts[e], acc1, c);
            accumulate(trajs[e], n_actions, spec.lambda2, gamma, options.weighting, counts[e], acc2, c);
        }
        const QEstimate q1 = solve_accumulated(acc1, n_obs, n_actions, spec.lambda1, options);
        const QEstimate q2 = solve_accumulated(acc2, n_obs, n_actions, spec.lambda2, options);
        const double ld = weighted_norm(q1.values - q2.values, norm_weights(q1, spec.norm), spec.norm);
        ld_sum += ld;
        ld_sq += ld * ld;
        for (std::size_t x = 0; x < X; ++x) {
            if (!q1.visited[x]) continue;
            const Index o = idx(x / n_actions), a = idx(x % n_actions);
            const double v[2] = {q1.values(o, a), q2.values(o, a)};
            for (int k = 0; k < 2; ++k) {
                sum(idx(x), k) += v[k];
                sum_sq(idx(x), k) += v[k] * v[k];
            }
            hits(idx(x)) += 1.0;
        }
    }
    const auto sd = [](double s, double sq, double n_rep) {
        if (n_rep < 2.0) return 0.0;
        const double mean = s / n_rep;
        return std::sqrt(std::max(0.0, (sq - n_rep * mean * mean) / (n_rep - 1.0)));
    };
    for (std::size_t x = 0; x < X; ++x) {
        const Index o = idx(x / n_actions), a = idx(x % n_actions);
        out.q1_std(o, a) = sd(sum(idx(x), 0), sum_sq(idx(x), 0), hits(idx(x)));
        out.q2_std(o, a) = sd(sum(idx(x), 1), sum_sq(idx(x), 1), hits(idx(x)));
    }
    out.discrepancy_std = sd(ld_sum, ld_sq, static_cast<double>(boot.replicates));
    return out;
}

SampleCheckReport sample_check(const Pomdp& p, const Policy& pi, const DiscrepancySpec& spec,
                               const SampleCheckOptions& options) {
    if (options.episodes == 0) throw Error("sample check needs at least one episode");
    SampleCheckReport report;
    report.episodes = options.episodes;
    report.horizon = options.horizon ? options.horizon : horizon_for(p);
    report.truncation_bias_bound = truncation_bias_bound(p, report.horizon);

    const std::vector<Trajectory> trajs = simulate(p, pi, options.episodes, report.horizon, options.seed);
    for (const Trajectory& t : trajs) report.truncated_episodes += t.truncated ? 1 : 0;

    EstimatorOptions est;
    est.weighting = options.weighting;
    const LdEstimate ld = estimate_ld(trajs, p.n_obs(), p.n_actions(), spec, p.gamma(), est);
    BootstrapOptions boot;
    boot.replicates = options.replicates;
    boot.seed = options.seed;
    const BootstrapResult bs = bootstrap_ld(trajs, p.n_obs(), p.n_actions(), spec, p.gamma(), est, boot);

    report.closed_form = lambda_discrepancy(p, pi, spec);
    report.sampled = ld.discrepancy;
    report.sampled_std = bs.discrepancy_std;
    report.relative_error = report.closed_form > 0.0
                                ? std::abs(report.sampled - report.closed_form) / report.closed_form
                                : (report.sampled == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());

    const Matrix closed1 = q_lambda(p, pi, spec.lambda1).values;
    const Matrix closed2 = q_lambda(p, pi, spec.lambda2).values;
    std::size_t within = 0;
    double noise_sq = 0.0, noise_max = 0.0;
    for (std::size_t o = 0; o < p.n_obs(); ++o)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            const std::size_t x = o * p.n_actions() + a;
            if (!ld.q1.visited[x]) {
                ++report.unvisited_pairs;
                continue;
            }
            const Index io = idx(o), ia = idx(a);
            // Noise floor of the sampled discrepancy from the per-pair spreads.
            const double sd_delta = std::hypot(bs.q1_std(io, ia), bs.q2_std(io, ia));
            noise_sq += ld.weights(io, ia) * sd_delta * sd_delta;
            noise_max = std::max(noise_max, sd_delta);
            const QEstimate* qs[2] = {&ld.q1, &ld.q2};
            const Matrix* closed[2] = {&closed1, &closed2};
            const Matrix* stds[2] = {&bs.q1_std, &bs.q2_std};
            for (int k = 0; k < 2; ++k) {
                PairCheck pc;
                pc.obs = o;
                pc.action = a;
                pc.lambda = qs[k]->lambda;
                pc.closed_form = (*closed[k])(io, ia);
                pc.estimate = qs[k]->values(io, ia);
                pc.std = (*stds[k])(io, ia);
                pc.visit_weight = qs[k]->visit_weight(io, ia);
                const double diff = std::abs(pc.estimate - pc.closed_form);
                pc.within_3sigma = diff <= 3.0 * pc.std || diff <= 1e-9 * std::max(1.0, std::abs(pc.closed_form));
                within += pc.within_3sigma ? 1 : 0;
                report.pairs.push_back(pc);
            }
        }
    report.fraction_within_3sigma =
        report.pairs.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(report.pairs.size());
    const double floor = spec.norm == NormKind::OccupancyWeightedMax ? noise_max : std::sqrt(noise_sq);
    report.consistent_with_zero = report.sampled <= 3.0 * floor;
    return report;
}

nlohmann::json to_json(const SampleCheckReport& r) {
    nlohmann::json j;
    j["schema"] = "ldisc.sample_check/1";
    j["closed_form"] = r.closed_form;
    j["sampled"] = r.sampled;
    j["relative_error"] = std::isfinite(r.relative_error) ? nlohmann::json(r.relative_error) : nlohmann::json(nullptr);
    j["sampled_std"] = r.sampled_std;
    j["consistent_with_zero"] = r.consistent_with_zero;
    j["fraction_within_3sigma"] = r.fraction_within_3sigma;
    j["unvisited_pairs"] = r.unvisited_pairs;
    j["episodes"] = r.episodes;
    j["horizon"] = r.horizon;
    j["truncated_episodes"] = r.truncated_episodes;
    j["truncation_bias_bound"] =
        std::isfinite(r.truncation_bias_bound) ? nlohmann::json(r.truncation_bias_bound) : nlohmann::json(nullptr);
    nlohmann::json pairs = nlohmann::json::array();
    for (const PairCheck& pc : r.pairs)
        pairs.push_back({{"obs", pc.obs},
                         {"action", pc.action},
                         {"lambda", pc.lambda},
                         {"closed_form", pc.closed_form},
                         {"estimate", pc.estimate},
                         {"std", pc.std},
                         {"visit_weight", pc.visit_weight},
                         {"within_3sigma", pc.within_3sigma}});
    j["pairs"] = std::move(pairs);
    return j;
}

void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajs) {
    for (std::size_t e = 0; e < trajs.size(); ++e) {
        const Trajectory& t = trajs[e];
        nlohmann::json steps = nlohmann::json::array();
        for (const Step& s : t.steps) steps.push_back({s.obs, s.action, s.reward});
        nlohmann::json j = {{"episode", e},
                            {"seed", t.seed},
                            {"terminated", t.terminated},
                            {"truncated", t.truncated},
                            {"steps", std::move(steps)}};
        if (t.cut) j["cut"] = {t.cut->first, t.cut->second};
        out << j.dump() << '\n';
    }
}

}  // namespace ldisc

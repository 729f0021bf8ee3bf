#include "ldisc/model.hpp"

#include "ldisc/errors.hpp"
#include "ldisc/solver.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ldisc {

Pomdp::Pomdp(Matrix transitions, Matrix rewards, Matrix phi, Vector p0, double gamma,
             std::vector<bool> terminal)
    : transitions_(std::move(transitions)),
      rewards_(std::move(rewards)),
      phi_(std::move(phi)),
      p0_(std::move(p0)),
      gamma_(gamma),
      terminal_(std::move(terminal)) {
    const auto S = rewards_.rows();
    const auto A = rewards_.cols();
    if (transitions_.rows() != S * A || transitions_.cols() != S)
        throw DimensionMismatch("transition matrix must be (S*A) x S");
    if (phi_.rows() != S) throw DimensionMismatch("observation matrix must have S rows");
    if (p0_.size() != S) throw DimensionMismatch("start distribution must have S entries");
    if (static_cast<Eigen::Index>(terminal_.size()) != S)
        throw DimensionMismatch("terminal flags must have S entries");
}

Matrix Pomdp::solve_transitions() const {
    Matrix T = transitions_;
    const auto A = static_cast<Eigen::Index>(n_actions());
    for (std::size_t s = 0; s < n_states(); ++s)
        if (terminal_[s]) T.middleRows(static_cast<Eigen::Index>(s) * A, A).setZero();
    return T;
}

Pomdp Pomdp::with_phi(Matrix phi) const {
    return Pomdp(transitions_, rewards_, std::move(phi), p0_, gamma_, terminal_);
}
Pomdp Pomdp::with_p0(Vector p0) const {
    return Pomdp(transitions_, rewards_, phi_, std::move(p0), gamma_, terminal_);
}
Pomdp Pomdp::with_gamma(double gamma) const {
    return Pomdp(transitions_, rewards_, phi_, p0_, gamma, terminal_);
}
Pomdp Pomdp::with_transitions(Matrix transitions) const {
    return Pomdp(std::move(transitions), rewards_, phi_, p0_, gamma_, terminal_);
}

Policy::Policy(Matrix probs) : probs_(std::move(probs)) {}

Policy Policy::from_logits(Matrix logits) {
    Policy pi(row_softmax(logits));
    pi.logits_ = std::move(logits);
    return pi;
}

Policy Policy::uniform(std::size_t n_obs, std::size_t n_actions) {
    return Policy(Matrix::Constant(static_cast<Eigen::Index>(n_obs),
                                   static_cast<Eigen::Index>(n_actions),
                                   1.0 / static_cast<double>(n_actions)));
}

Policy random_policy(std::size_t n_obs, std::size_t n_actions, std::uint64_t seed,
                     double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    Matrix logits(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(n_actions));
    for (Eigen::Index o = 0; o < logits.rows(); ++o)
        for (Eigen::Index a = 0; a < logits.cols(); ++a) logits(o, a) = normal(rng);
    return Policy::from_logits(std::move(logits));
}

PolicyTensors policy_tensors(const Pomdp& p, const Policy& pi) {
    require_compatible(p, pi);
    const std::size_t S = p.n_states(), A = p.n_actions(), O = p.n_obs();
    const OccupancyWeights occ = stationary_weights(p, pi);
    const Matrix P = p.phi() * pi.probs();  // S x A

    PolicyTensors out;
    out.Pi = Tensor3({O, O, A});
    out.PiS = Tensor3({S, S, A});
    out.WPi = Tensor3({O, S, A});
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t a = 0; a < A; ++a) out.Pi(o, o, a) = pi(o, a);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) out.PiS(s, s, a) = P(s, a);
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) out.WPi(o, s, a) = occ.W(o, s) * pi(o, a);
    out.W = occ.W;
    out.obs_occupancy = occ.obs_occupancy;
    out.reachable_obs = occ.reachable_obs;
    return out;
}

std::string ValidationReport::summary() const {
    if (issues.empty()) return "ok";
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) os << "; ";
        os << issues[i].check << ": " << issues[i].message;
    }
    return os.str();
}

namespace {

// Records the first failure of each check kind only.
class IssueSink {
public:
    explicit IssueSink(ValidationReport& r) : report_(r) {}
    void add(const std::string& check, const std::string& message) {
        for (const auto& i : report_.issues)
            if (i.check == check) return;
        report_.issues.push_back({check, message});
    }

private:
    ValidationReport& report_;
};

void check_distribution_rows(const Matrix& m, double tol, const std::string& check_nonneg,
                             const std::string& check_sum, IssueSink& sink,
                             const auto& describe_row) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double total = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            if (!std::isfinite(v) || v < 0.0) {
                std::ostringstream os;
                os << "entry " << describe_row(r) << " column " << c << " is " << v;
                sink.add(check_nonneg, os.str());
            }
            total += v;
        }
        if (!(std::abs(total - 1.0) <= tol)) {
            std::ostringstream os;
            os << "slice " << describe_row(r) << " sums to " << total;
            sink.add(check_sum, os.str());
        }
    }
}

}  // namespace

ValidationReport validate(const Pomdp& p, const Tolerances& tol) {
    ValidationReport report;
    IssueSink sink(report);
    const std::size_t A = p.n_actions();

    check_distribution_rows(p.transitions(), tol.construction, "T_nonnegative", "T_row_sum", sink,
                            [A](Eigen::Index r) {
                                std::ostringstream os;
                                os << "(" << static_cast<std::size_t>(r) / A << ","
                                   << static_cast<std::size_t>(r) % A << ")";
                                return os.str();
                            });
    check_distribution_rows(p.phi(), tol.construction, "Phi_nonnegative", "Phi_row_sum", sink,
                            [](Eigen::Index r) {
                                std::ostringstream os;
                                os << "(" << r << ")";
                                return os.str();
                            });

    double p0_total = 0.0;
    for (Eigen::Index s = 0; s < p.p0().size(); ++s) {
        const double v = p.p0()(s);
        if (!std::isfinite(v) || v < 0.0)
            sink.add("p0_nonnegative", "entry " + std::to_string(s) + " is " + std::to_string(v));
        p0_total += v;
    }
    if (!(std::abs(p0_total - 1.0) <= tol.construction))
        sink.add("p0_sum", "start distribution sums to " + std::to_string(p0_total));

    for (std::size_t s = 0; s < p.n_states(); ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const double r = p.rewards()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            if (!std::isfinite(r))
                sink.add("R_finite", "R(" + std::to_string(s) + "," + std::to_string(a) + ") is not finite");
            if (p.terminal()[s] && r != 0.0)
                sink.add("terminal_reward", "terminal state " + std::to_string(s) +
                                                " has nonzero reward for action " + std::to_string(a));
        }
    }

    if (!(p.gamma() >= 0.0 && p.gamma() <= 1.0))
        sink.add("gamma_range", "gamma " + std::to_string(p.gamma()) + " outside [0,1]");
    return report;
}

ValidationReport validate(const Policy& pi, const Tolerances& tol) {
    ValidationReport report;
    IssueSink sink(report);
    check_distribution_rows(pi.probs(), tol.construction, "policy_nonnegative", "policy_row_sum",
                            sink, [](Eigen::Index r) {
                                std::ostringstream os;
                                os << "(" << r << ")";
                                return os.str();
                            });
    if (pi.logits()) {
        const Matrix expected = row_softmax(*pi.logits());
        if ((expected - pi.probs()).cwiseAbs().maxCoeff() > tol.construction)
            sink.add("policy_logits", "probabilities differ from softmax(logits)");
    }
    return report;
}

void require_valid(const Pomdp& p, const Tolerances& tol) {
    const auto report = validate(p, tol);
    if (!report.ok()) throw InvalidModel("invalid POMDP: " + report.summary());
}

void require_compatible(const Pomdp& p, const Policy& pi, const Tolerances& tol) {
    require_valid(p, tol);
    if (pi.n_obs() != p.n_obs() || pi.n_actions() != p.n_actions())
        throw DimensionMismatch("policy is " + std::to_string(pi.n_obs()) + "x" +
                                std::to_string(pi.n_actions()) + " but POMDP needs " +
                                std::to_string(p.n_obs()) + "x" + std::to_string(p.n_actions()));
    const auto report = validate(pi, tol);
    if (!report.ok()) throw InvalidModel("invalid policy: " + report.summary());
}

bool is_block_mdp(const Pomdp& p) {
    for (Eigen::Index o = 0; o < p.phi().cols(); ++o) {
        int emitters = 0;
        for (Eigen::Index s = 0; s < p.phi().rows(); ++s)
            if (p.phi()(s, o) > 0.0) ++emitters;
        if (emitters > 1) return false;
    }
    return true;
}

}  // namespace ldisc

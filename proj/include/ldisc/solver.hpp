#pragma once

#include "ldisc/model.hpp"

#include <string>
#include <vector>

namespace ldisc {

/// Discounted occupancy and the state-blending weights W = Pr(s | o).
struct OccupancyWeights {
    Matrix W;                         // O x S
    Vector state_occupancy;           // c, solves (I - gamma T_pi^T) c = p0
    Vector obs_occupancy;             // sum_s Phi(s, o) c(s)
    std::vector<bool> reachable_obs;  // obs_occupancy > 0
};

/// Observation-space action values for one lambda.
struct QTable {
    Matrix values;  // O x A
    double lambda = 0.0;
    double condition = 1.0;  // condition estimate of the reduced S x S system I - gamma K T
    std::vector<std::string> warnings;
};

struct VTable {
    Vector values;  // O
    double lambda = 0.0;
};

enum class NormKind { PolicyWeightedL2, OccupancyWeightedL2, OccupancyWeightedMax };

std::string to_string(NormKind kind);
NormKind norm_from_string(const std::string& name);

struct DiscrepancySpec {
    double lambda1 = 0.0;
    double lambda2 = 1.0;
    NormKind norm = NormKind::PolicyWeightedL2;
};

/// The MDP over observations induced by a policy's occupancy weights.
struct EffectiveMdp {
    Tensor3 T_obs;  // O x A x O
    Matrix R_obs;   // O x A
    double gamma = 0.0;
    std::vector<bool> reachable_obs;
};

/// Condition numbers above this produce a warning on the QTable.
inline constexpr double kConditionWarning = 1e12;

OccupancyWeights stationary_weights(const Pomdp& p, const Policy& pi);

/// Closed-form TD(lambda) fixed point
///   Q = W (I - gamma T K)^{-1} : R,  K = lambda Pi^S + (1 - lambda) Phi W^Pi,
/// computed without forming the (S*A) x (S*A) inverse: the system reduces to
/// an S x S solve because T K factors through the state space.
QTable q_lambda(const Pomdp& p, const Policy& pi, double lambda);

/// V(o) = sum_a pi(a | o) Q(o, a). Cross-checked against W^Pi : (I - gamma T K)^{-1} : R.
VTable v_lambda(const Pomdp& p, const Policy& pi, double lambda);

EffectiveMdp effective_mdp(const Pomdp& p, const Policy& pi);

/// Standard policy evaluation of an MDP over observations:
/// Q = R + gamma T_obs (pi . Q). Returns O x A.
Matrix evaluate_mdp_q(const Tensor3& T_obs, const Matrix& R_obs, const Policy& pi,
                      double gamma);

/// Per-(o, a) weights used by the discrepancy norm. Zero for unreachable
/// observations under every norm.
Matrix discrepancy_weights(const OccupancyWeights& occ, const Policy& pi, NormKind norm);

/// Weighted norm of Q^{lambda1} - Q^{lambda2}. Always non-negative.
double lambda_discrepancy(const Pomdp& p, const Policy& pi, const DiscrepancySpec& spec);

/// Hidden-state action values Q_S = (I - gamma T Pi^S)^{-1} : R, S x A.
Matrix state_q_values(const Pomdp& p, const Policy& pi);

/// Expected discounted return from p0: sum_s p0(s) V_S(s).
double start_value(const Pomdp& p, const Policy& pi);

/// Squared discrepancy (no square root) and its gradient with respect to the
/// flattened transition matrix. Rows of terminal states receive zero gradient
/// because the solver never reads them.
struct DiscrepancyAdjoint {
    double squared = 0.0;   // objective that is differentiated
    double discrepancy = 0.0;
    Matrix grad_transitions;  // (S*A) x S
};
DiscrepancyAdjoint discrepancy_adjoint(const Pomdp& p, const Policy& pi,
                                       const DiscrepancySpec& spec);

/// Start value and its gradient with respect to the policy probabilities.
struct StartValueGradient {
    double value = 0.0;
    Matrix grad_probs;  // O x A
};
StartValueGradient start_value_gradient(const Pomdp& p, const Policy& pi);

}  // namespace ldisc

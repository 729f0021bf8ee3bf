#pragma once

#include "ldisc/parser.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ldisc {

/// T-maze with a corridor of `corridor_len` cells.
///
/// States: 0 blue start (goal up), 1 red start (goal down), hallway cell i
/// with goal context g at 2 + 2i + g, junctions at 2 + 2L + g, and one shared
/// terminal state last. Observations: blue, red, corridor, junction,
/// terminal. Actions: up, down, right, left. Moving into a wall stays in place
/// with zero reward. At the junction the correct vertical move pays +4 and the
/// other -0.1, both ending the episode.
PomdpSource tmaze(std::size_t corridor_len = 5, double gamma = 0.9);

/// The same dynamics with one observation per state (Phi = identity).
PomdpSource tmaze_fully_observable(std::size_t corridor_len = 5, double gamma = 0.9);

enum class AliasingPattern { Corridor, Junction, Both };

std::string to_string(AliasingPattern pattern);
AliasingPattern aliasing_from_string(const std::string& name);

/// S x S observation matrix over the fully observable T-maze's observations in
/// which the chosen state groups share one observation: every hallway cell
/// emits the first hallway cell's observation, and/or both junctions emit the
/// first junction's observation.
Matrix tmaze_aliased_phi(std::size_t corridor_len, AliasingPattern pattern);

/// Policy over the five T-maze observations: right everywhere before the
/// junction, up at the junction.
Policy tmaze_right_then_up_policy();

/// Policy over the fully observable T-maze's observations: right until the
/// junction, then up with probability 2/3 and down with probability 1/3.
Policy tmaze_sweep_policy(std::size_t corridor_len = 5);

/// Parity check POMDP and its perturbations.
///
/// Four start branches show two colours in sequence: (red, pink),
/// (red, cyan), (blue, pink), (blue, cyan). Red-pink and blue-cyan match.
/// Either action moves forward through the colours; at the shared white
/// junction `up` pays +1 when the colours match and -1 otherwise, `down` the
/// reverse, and the episode ends.
struct ParityOptions {
    double gamma = 0.9;
    /// Start probabilities become (0.25 + shift, 0.25 - shift, 0.25, 0.25).
    double start_shift = 0.0;
    /// In the first colour state of the red-pink branch, `down` stays in place
    /// with this probability.
    double stay_prob = 0.0;
};
PomdpSource parity_check(const ParityOptions& options = {});

/// Six-state, two-action POMDP with T Pi^S = T Phi W^Pi for every policy. The
/// state sx emits the observations of s1 and s2 with equal probability.
PomdpSource tk_equality();

/// Five-state MDP obtained from tk_equality by merging sx into s1 and s2.
/// Shares tk_equality's observation labels, so the same policy applies.
PomdpSource tk_equality_collapsed();

/// Copy of p with Phi = (1 - mix) Phi + mix phi_aliased.
Pomdp mix_observation(const Pomdp& p, const Matrix& phi_aliased, double mix);

/// Random block MDP: random dynamics, rewards in [-1, 1], random start
/// distribution, and `obs_per_state` observations owned by each state.
PomdpSource random_block_mdp(std::size_t n_states, std::size_t n_actions,
                             std::size_t obs_per_state, std::uint64_t seed, double gamma = 0.9);

/// Names of the bundled Cassandra files: tiger, paint, cheese, network,
/// shuttle, 4x3.
const std::vector<std::string>& fixture_names();
/// Raw text of a bundled file.
std::string fixture_text(const std::string& name);
/// Parsed bundled file, marked as builtin.
PomdpSource fixture(const std::string& name);

/// Every environment reachable by name: the fixtures plus tmaze, tmaze-mdp,
/// parity, tk-equality, and tk-collapsed.
std::vector<std::string> environment_names();
PomdpSource environment(const std::string& name);

}  // namespace ldisc

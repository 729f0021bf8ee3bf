#pragma once

#include "ldisc/model.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace ldisc {

enum class Origin { File, Builtin };

/// A POMDP together with the names it was declared with.
struct PomdpSource {
    std::string name;
    Origin origin = Origin::Builtin;
    Pomdp pomdp;
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> obs_names;
};

/// Parses the Cassandra `.POMDP` subset:
///   discount, values (reward only), states/actions/observations (count or
///   names), start (vector, `uniform`, or a state name), T and O entries in
///   single-entry, row, and matrix form (including `uniform`/`identity`),
///   and R entries in single-entry, row, and matrix form, with `*` wildcards.
///
/// R(s, a, s', o) is reduced to R(s, a) by taking the expectation over s' and
/// o. O(o | a, s') must not depend on the action; it becomes Phi(o | s').
/// Absorbing zero-reward states are flagged terminal.
PomdpSource parse_pomdp(std::string_view text, std::string name = "inline");

/// Reads and parses a file. Throws std::ios_base::failure on I/O errors.
PomdpSource load_pomdp_file(const std::string& path);

/// Writes a POMDP in the same subset. parse_pomdp(to_cassandra(src)) returns
/// equal tensors.
std::string to_cassandra(const PomdpSource& src);

}  // namespace ldisc

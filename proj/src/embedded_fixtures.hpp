#pragma once

#include <cstddef>

namespace ldisc::detail {

struct EmbeddedFile {
    const char* name;
    const char* text;
};

// Generated at build time from data/pomdps.
extern const EmbeddedFile kEmbeddedFixtures[];
extern const std::size_t kEmbeddedFixtureCount;

}  // namespace ldisc::detail

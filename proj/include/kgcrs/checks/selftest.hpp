// Fast consistency checks run by `kgcrs selftest`.

#pragma once

#include <cstdint>
#include <ostream>

namespace kgcrs::checks {

/// Prints one "PASS name" or "FAIL name: detail" line per check; true when
/// every check passes.
bool run_selftest(std::ostream& out, std::uint64_t seed);

}  // namespace kgcrs::checks

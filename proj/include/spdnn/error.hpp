#pragma once

#include <stdexcept>
#include <string>

namespace spdnn {

/// Malformed or inconsistent input: bad files, dimension mismatches,
/// out-of-range indices.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A partitioning request that cannot be satisfied at all (e.g. parts < 1).
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spdnn

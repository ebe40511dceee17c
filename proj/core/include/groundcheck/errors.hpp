#pragma once

#include <stdexcept>
#include <string>

namespace groundcheck {

// Boxes outside bounds, dimension mismatches, degenerate maps.
struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files: JSONL, GTF, CSV, PPM.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A loaded record violates a documented invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Correlation has no defined value (zero variance or a single class).
// Reports catch this and print "n/a".
struct UndefinedCorrelation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted on a non-finite loss.
struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace groundcheck

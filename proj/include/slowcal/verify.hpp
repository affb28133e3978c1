#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "slowcal/algorithms.hpp"

namespace slowcal {

struct CheckResult {
  std::string name;
  double value = 0.0;      // the measured defect (or slack, for "min" checks)
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

struct VerifyOptions {
  /// Applied to every algorithm run inside the suite (mutation testing).
  FaultInjection fault{};
  std::uint64_t seed = 7;
};

/// Exact-identity and invariant checks across all modules, on small
/// self-contained problems.
VerifyReport verify_suite(const VerifyOptions& options = {});

/// One line per check plus a final verdict line.
void print_report(std::ostream& out, const VerifyReport& report);

}  // namespace slowcal

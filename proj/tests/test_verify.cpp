#include <doctest.h>

#include <chrono>
#include <sstream>

#include "slowcal/verify.hpp"

using namespace slowcal;

namespace {

bool failed(const VerifyReport& r, const std::string& fragment) {
  for (const auto& c : r.checks) {
    if (c.name.find(fragment) != std::string::npos && !c.passed) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("verification suite passes on the unmodified algorithms") {
  const auto start = std::chrono::steady_clock::now();
  const auto report = verify_suite();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& c : report.checks) {
    INFO(c.name << " value " << c.value << " tolerance " << c.tolerance);
    CHECK(c.passed);
  }
  CHECK(report.passed());
  CHECK(report.checks.size() >= 12);
  CHECK(seconds < 5.0);

  std::ostringstream out;
  print_report(out, report);
  CHECK(out.str().find("[FAIL]") == std::string::npos);
  CHECK(out.str().find("tolerance") != std::string::npos);
}

TEST_CASE("an off-by-one averaging coefficient is caught") {
  VerifyOptions options;
  options.fault.gamma_off_by_one = true;
  const auto report = verify_suite(options);
  CHECK(!report.passed());
  CHECK(failed(report, "weighted average of wbar"));
}

TEST_CASE("a shifted weight at the gradient step is caught") {
  VerifyOptions options;
  options.fault.alpha_shift_at_gradient = true;
  const auto report = verify_suite(options);
  CHECK(!report.passed());
  CHECK((failed(report, "momentum form") || failed(report, "certificate")));
}

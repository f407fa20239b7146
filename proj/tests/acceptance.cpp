// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Case counts and tolerances are the defaults pinned in slide/verify.hpp and
// verify.cpp; this binary only drives them.

#include <cstdio>
#include <exception>

#include "slide/verify.hpp"

int main() {
  try {
    const auto results = slide::verify::run_suite(/*include_bench=*/true);
    bool ok = true;
    for (const auto& r : results) {
      std::printf("%s\n", slide::verify::format_line(r).c_str());
      ok = ok && r.passed;
    }
    std::printf("acceptance: %s\n", ok ? "all criteria passed" : "FAILED");
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: error: %s\n", e.what());
    return 1;
  }
}

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "properties.hpp"

int main(int argc, char** argv) {
  std::uint64_t seed = 20240601;
  if (argc > 1) seed = std::strtoull(argv[1], nullptr, 10);
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = testing::run_properties(seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int total = 0, failed = 0;
  for (const auto& r : results) {
    std::printf("%-48s %5d cases  %s\n", r.name.c_str(), r.cases, r.failures ? "FAIL" : "ok");
    if (r.failures) std::printf("    %d failing, first: %s\n", r.failures, r.first_failure.c_str());
    total += r.cases;
    failed += r.failures;
  }
  std::printf("%d cases, %d failed, %.2f s (seed %llu)\n", total, failed, secs,
              static_cast<unsigned long long>(seed));
  return failed ? 1 : 0;
}

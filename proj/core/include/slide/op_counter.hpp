#pragma once

#include <cstdint>

namespace slide {

/// Per-thread tally of heavy kernels. Convolution and matmul entry points
/// bump these so callers can assert how much work a path performed without
/// timing it. multiply_adds is the nominal dense count, independent of any
/// zero-skipping inside the kernels.
struct OpCounts {
  std::uint64_t depthwise_convs = 0;
  std::uint64_t grouped_convs = 0;
  std::uint64_t matmuls = 0;
  std::uint64_t multiply_adds = 0;
};

OpCounts& op_counts();
void reset_op_counts();

/// Snapshot-and-diff helper: counts() returns the work done since construction.
class OpCountScope {
 public:
  OpCountScope() : start_(op_counts()) {}
  OpCounts counts() const {
    const OpCounts& now = op_counts();
    return {now.depthwise_convs - start_.depthwise_convs, now.grouped_convs - start_.grouped_convs,
            now.matmuls - start_.matmuls, now.multiply_adds - start_.multiply_adds};
  }

 private:
  OpCounts start_;
};

}  // namespace slide

#include "slide/tensor.hpp"

#include <sstream>

#include "slide/op_counter.hpp"

namespace slide {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

OpCounts& op_counts() {
  thread_local OpCounts counts;
  return counts;
}

void reset_op_counts() { op_counts() = OpCounts{}; }

}  // namespace slide

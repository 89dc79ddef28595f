#include "petra/flops.hpp"

namespace petra::flops {
namespace {
thread_local std::uint64_t counter = 0;
}

void add(std::uint64_t count) { counter += count; }
void reset() { counter = 0; }
std::uint64_t count() { return counter; }

}  // namespace petra::flops

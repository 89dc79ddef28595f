#pragma once

#include <cstdint>

namespace petra::flops {

// Per-thread multiply-add counter fed by the dense kernels. Used to check
// asymptotic cost without relying on wall-clock timing.
void add(std::uint64_t count);
void reset();
std::uint64_t count();

}  // namespace petra::flops

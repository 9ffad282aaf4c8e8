#pragma once

#include <cstddef>

namespace stdb {

// Staircase warmup then decay, in units of the base rate:
//   ep <  50:  base * (ep / 5 + 1)   (integer division)
//   ep < 200:  the epoch-49 value held
//   ep < 300:  base
//   ep >= 300: base / 10
// With base = 1e-4 this reproduces the published anchors exactly.
double lr_schedule(std::size_t epoch, double base);

}  // namespace stdb

#include "stdb/schedule.hpp"

namespace stdb {

double lr_schedule(std::size_t epoch, double base) {
  if (epoch < 50) {
    return base * static_cast<double>(epoch / 5 + 1);
  }
  if (epoch < 200) {
    return base * static_cast<double>(49 / 5 + 1);
  }
  if (epoch < 300) {
    return base;
  }
  return base / 10.0;
}

}  // namespace stdb

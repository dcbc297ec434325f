#include "sko/ultraspherical.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sko {

RecurrenceCoeffs recurrence_coeffs(int k, double lambda) {
  if (k < 2) throw std::invalid_argument("recurrence_coeffs: k must be >= 2, got " + std::to_string(k));
  if (!(lambda > 0)) throw std::invalid_argument("recurrence_coeffs: lambda must be positive");
  const double denom = k + 2 * lambda - 1;
  RecurrenceCoeffs c{2 * (k + lambda - 1) / denom, (k - 1) / denom};
#ifdef SKO_FAULT_FLIP_C2
  c.c2 = -c.c2;
#endif
  return c;
}

double gate(int k, double n) { return std::clamp(n - k + 1, 0.0, 1.0); }

}  // namespace sko

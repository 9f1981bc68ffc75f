#include "klx/rejection.hpp"

#include <fmt/format.h>

#include "klx/errors.hpp"

namespace klx {

RejectionConfig RejectionConfig::make(double beta, double m_threshold, double delta) {
  RejectionConfig c{beta, m_threshold, delta};
  c.validate();
  return c;
}

void RejectionConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("rejection: beta must be positive");
  if (!(m_threshold > 0.0) || !std::isfinite(m_threshold)) throw ValidationError("rejection: M must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("rejection: delta must lie in (0, 1)");
  const double n = std::ceil(4.0 * m_threshold * std::log(4.0 / delta));
  if (!(n >= 1.0) || n > 1e15) throw ValidationError(fmt::format("rejection: budget {} out of range", n));
}

std::uint64_t RejectionConfig::n_budget() const {
  return static_cast<std::uint64_t>(std::ceil(4.0 * m_threshold * std::log(4.0 / delta)));
}

}  // namespace klx

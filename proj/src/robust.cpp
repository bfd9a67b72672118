#include "mvpose/robust.hpp"

#include <cmath>
#include <limits>

#include "mvpose/error.hpp"

namespace mvpose {

void BarronParams::validate() const {
  if (!std::isfinite(alpha) || !(c > 0) || !std::isfinite(c)) {
    throw Error(ErrorKind::InvalidArgument, "Barron loss needs finite alpha and c > 0");
  }
}

double BarronParams::sup() const {
  if (alpha < 0) return std::abs(alpha - 2.0) / std::abs(alpha);
  return std::numeric_limits<double>::infinity();
}

double rho(double r, const BarronParams& p) {
  const double x2 = (r / p.c) * (r / p.c);
  if (p.alpha == 2.0) return 0.5 * x2;
  if (p.alpha == 0.0) return std::log1p(0.5 * x2);
  const double b = std::abs(p.alpha - 2.0);
  // expm1/log1p keep the small-residual regime accurate.
  return (b / p.alpha) * std::expm1(0.5 * p.alpha * std::log1p(x2 / b));
}

double rho_weight(double r, const BarronParams& p) {
  const double inv_c2 = 1.0 / (p.c * p.c);
  const double x2 = (r / p.c) * (r / p.c);
  if (p.alpha == 2.0) return inv_c2;
  if (p.alpha == 0.0) return inv_c2 / (0.5 * x2 + 1.0);
  const double b = std::abs(p.alpha - 2.0);
  return inv_c2 * std::pow(x2 / b + 1.0, 0.5 * p.alpha - 1.0);
}

}  // namespace mvpose

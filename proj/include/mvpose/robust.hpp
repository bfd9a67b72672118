#pragma once

namespace mvpose {

/// Barron's general robust loss. alpha = 2 is least squares, alpha = 0 is
/// Cauchy, alpha < 0 saturates at |alpha - 2| / |alpha|.
struct BarronParams {
  double alpha = -5.0;
  double c = 0.5;

  /// Throws Error(InvalidArgument) unless c > 0 and alpha is finite.
  void validate() const;
  bool saturating() const { return alpha < 0; }
  /// Supremum of rho over r >= 0; +infinity for alpha >= 0.
  double sup() const;
};

double rho(double r, const BarronParams& p);

/// IRLS weight (1/r) * d rho / dr, with its r -> 0 limit 1/c^2 at r = 0.
double rho_weight(double r, const BarronParams& p);

}  // namespace mvpose

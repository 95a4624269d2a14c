#pragma once

#include <vector>

#include "visim/rng.hpp"

namespace visim {

/// A point on S^{d-1}. The constructor normalizes its argument and rejects
/// zero or non-finite input. Latent usage requires d >= 2; d = 1 (the two
/// points of S^0) is permitted because tangent sampling at d = 3 needs it.
class UnitVector {
 public:
  explicit UnitVector(std::vector<double> coords);

  const std::vector<double>& coords() const { return coords_; }
  int dim() const { return static_cast<int>(coords_.size()); }
  double operator[](int i) const { return coords_[i]; }

  double dot(const UnitVector& other) const;

  /// Basis vector e_i.
  static UnitVector basis(int d, int axis = 0);

 private:
  std::vector<double> coords_;
};

/// Uniform direction on S^{dim-1} as a raw vector; dim = 1 yields {-1} or
/// {+1} with equal probability.
std::vector<double> uniform_direction(int dim, SeededRng& rng);

/// Uniform sample on S^{d-1} (normalized standard Gaussian vector).
UnitVector sample_uniform_sphere(int d, SeededRng& rng);

/// (I - 2 u u^T) y with u = normalize(e_1 - target); maps e_1 to target.
/// target == e_1 degenerates and returns y unchanged.
UnitVector householder_reflect(const UnitVector& y, const UnitVector& target);

}  // namespace visim

#include "visim/sphere.hpp"

#include <cmath>
#include <stdexcept>

namespace visim {

UnitVector::UnitVector(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.empty())
    throw std::invalid_argument("UnitVector: dimension must be at least 1");
  double sq = 0.0;
  for (double v : coords_) {
    if (!std::isfinite(v)) throw std::invalid_argument("UnitVector: non-finite coordinate");
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) throw std::invalid_argument("UnitVector: zero vector cannot be normalized");
  const double inv = 1.0 / norm;
  for (double& v : coords_) v *= inv;
}

double UnitVector::dot(const UnitVector& other) const {
  if (other.dim() != dim())
    throw std::invalid_argument("UnitVector::dot: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < dim(); ++i) acc += coords_[i] * other.coords_[i];
  return acc;
}

UnitVector UnitVector::basis(int d, int axis) {
  if (d < 1 || axis < 0 || axis >= d)
    throw std::invalid_argument("UnitVector::basis: bad dimension or axis");
  std::vector<double> v(d, 0.0);
  v[axis] = 1.0;
  return UnitVector(std::move(v));
}

std::vector<double> uniform_direction(int dim, SeededRng& rng) {
  if (dim < 1) throw std::domain_error("uniform_direction: requires dim >= 1");
  if (dim == 1) return {rng.uniform() < 0.5 ? -1.0 : 1.0};
  std::vector<double> v(dim);
  while (true) {
    double sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm > 1e-12) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
}

UnitVector sample_uniform_sphere(int d, SeededRng& rng) {
  return UnitVector(uniform_direction(d, rng));
}

UnitVector householder_reflect(const UnitVector& y, const UnitVector& target) {
  const int d = y.dim();
  if (target.dim() != d)
    throw std::invalid_argument("householder_reflect: dimension mismatch");
  std::vector<double> u(d);
  double sq = 0.0;
  for (int i = 0; i < d; ++i) {
    u[i] = (i == 0 ? 1.0 : 0.0) - target[i];
    sq += u[i] * u[i];
  }
  if (sq < 1e-24) return y;  // target is e_1
  const double inv = 1.0 / std::sqrt(sq);
  double uy = 0.0;
  for (int i = 0; i < d; ++i) {
    u[i] *= inv;
    uy += u[i] * y[i];
  }
  std::vector<double> out(d);
  for (int i = 0; i < d; ++i) out[i] = y[i] - 2.0 * uy * u[i];
  return UnitVector(std::move(out));
}

}  // namespace visim

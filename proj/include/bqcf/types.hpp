#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bqcf {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Integer lattice coordinates m = (m1, m2); the physical site is F·m.
struct LatticePoint {
  int m1 = 0;
  int m2 = 0;

  friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
  LatticePoint operator+(const LatticePoint& o) const { return {m1 + o.m1, m2 + o.m2}; }
  LatticePoint operator-(const LatticePoint& o) const { return {m1 - o.m1, m2 - o.m2}; }
  LatticePoint operator-() const { return {-m1, -m2}; }
};

/// Hexagonal ring number of a lattice point: max(|m1|, |m2|, |m1 + m2|).
inline int hex_distance(const LatticePoint& m) {
  const int a = m.m1 < 0 ? -m.m1 : m.m1;
  const int b = m.m2 < 0 ? -m.m2 : m.m2;
  const int c = (m.m1 + m.m2) < 0 ? -(m.m1 + m.m2) : (m.m1 + m.m2);
  return a > b ? (a > c ? a : c) : (b > c ? b : c);
}

/// Number of lattice sites with hex_distance <= k.
inline std::int64_t hex_site_count(int k) {
  return k < 0 ? 0 : 3 * std::int64_t(k) * (k + 1) + 1;
}

/// One named pass/fail entry of a structural or consistency check.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfDomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Raised when atoms come closer than the collision threshold or a bond
/// vector degenerates; the potential is not evaluated there.
class CollisionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace bqcf

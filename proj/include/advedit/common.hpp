#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace advedit {

using Vec2 = Eigen::Vector2d;

constexpr double kPi = 3.14159265358979323846;

// World frame convention: x forward/east, y to the right of +x. Heading grows
// clockwise when viewed from above, so a positive yaw rate is a right turn.

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  a -= kPi;
  if (a == -kPi) a = kPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline Vec2 heading_vec(double heading) {
  return {std::cos(heading), std::sin(heading)};
}

/// Unit normal pointing to the right of `heading`.
inline Vec2 right_normal(double heading) {
  return {-std::sin(heading), std::cos(heading)};
}

/// Rigid 2D frame: origin plus heading. `to_local` maps world points into
/// the frame (x forward, y right).
struct Frame2D {
  Vec2 origin{0.0, 0.0};
  double heading = 0.0;

  Vec2 to_local(const Vec2& p) const {
    const Vec2 d = p - origin;
    const double c = std::cos(heading), s = std::sin(heading);
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  }
  Vec2 to_world(const Vec2& p) const {
    const double c = std::cos(heading), s = std::sin(heading);
    return origin + Vec2{c * p.x() - s * p.y(), s * p.x() + c * p.y()};
  }
  Vec2 rotate_to_local(const Vec2& v) const {
    const double c = std::cos(heading), s = std::sin(heading);
    return {c * v.x() + s * v.y(), -s * v.x() + c * v.y()};
  }
};

/// Rounds to three decimals, the precision used by every text record.
inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

// Error hierarchy. Everything thrown by the library derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// FNV-1a 64-bit. Used for fixture keys and checkpoint fingerprints.
inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v);

/// Seeded generator with portable distributions (the std:: distributions
/// are implementation-defined, which would break cross-toolchain replay).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }
  /// Standard normal via Box-Muller (no cached second sample).
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  std::string save() const;
  void load(const std::string& state);

  /// Derives an independent seed for a named subsystem stream.
  static uint64_t derive(uint64_t seed, std::string_view stream,
                         uint64_t index = 0);

 private:
  std::mt19937_64 engine_;
};

}  // namespace advedit

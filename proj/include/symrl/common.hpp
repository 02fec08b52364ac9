#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace symrl {

inline constexpr double kPi = 3.14159265358979323846;

// sin(pi*u) with exact zeros at integer u and exact 1 at u = 0.5.
// Phase features and swing profiles rely on the endpoint values being exact.
inline double sinpi(double u) {
  double k = std::floor(u);
  double f = u - k;
  if (f == 0.0) return 0.0;
  double s = (f == 0.5) ? 1.0 : std::sin(kPi * f);
  return (static_cast<std::int64_t>(k) % 2 == 0) ? s : -s;
}

// Wrap to (-180, 180].
inline double wrap_deg(double a) {
  a = std::fmod(a, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  Vec2 rotated(double rad) const {
    double c = std::cos(rad), s = std::sin(rad);
    return {c * x - s * y, s * x + c * y};
  }
  Vec2 normalized() const {
    double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
};

// Reflect q across the line through `origin` along unit direction `axis`.
inline Vec2 reflect_across(const Vec2& q, const Vec2& origin, const Vec2& axis) {
  Vec2 v = q - origin;
  double along = v.dot(axis);
  Vec2 mirrored = axis * (2.0 * along) - v;
  return origin + mirrored;
}

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic per-stream seed derivation: every consumer (init, each env
// worker, shuffling, eval) pulls an independent stream from the root seed.
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t x = root ^ h;
  std::uint64_t a = splitmix64(x);
  x ^= 0x632be59bd9b4e019ull + index * 0x9e3779b97f4a7c15ull;
  std::uint64_t b = splitmix64(x);
  return a ^ (b << 1);
}

// mt19937_64 with hand-rolled output transforms. std::*_distribution is not
// pinned down by the standard, so the transforms live here to keep runs
// bit-identical across library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(uniform() * n);
  }

  // Box-Muller, no cached spare (keeps serialized state self-contained).
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double exponential(double mean) {
    if (mean <= 0.0) throw std::invalid_argument("exponential: mean must be positive");
    return -mean * std::log(1.0 - uniform());
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("Rng::set_state: malformed state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace symrl

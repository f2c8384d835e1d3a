/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

namespace pulse {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Bounds with magnitude at or above this are treated as unbounded on input.
inline constexpr double kInfThreshold = 1e20;

// Absolute feasibility tolerance; matches the evaluation protocol default.
inline constexpr double kFeasTol = 1e-6;

// Slack used when rounding computed bounds of integer variables. Rounding
// outward (floor(x + eps) / ceil(x - eps)) can only loosen, never cut.
inline constexpr double kIntEps = 1e-6;

inline bool is_finite(double v) { return std::isfinite(v); }

inline double floor_eps(double v, double eps = kIntEps) { return std::floor(v + eps); }
inline double ceil_eps(double v, double eps = kIntEps) { return std::ceil(v - eps); }

inline bool is_integral(double v, double tol = 1e-9)
{
  return std::abs(v - std::round(v)) <= tol;
}

inline double clamp(double v, double lo, double hi)
{
  return v < lo ? lo : (v > hi ? hi : v);
}

// Compensated accumulator (Kahan-Babuska / Neumaier). Unlike plain Kahan it
// keeps the correction when a large term cancels the running sum, so
// [1e16, 1, -1e16] sums to exactly 1.
class KahanAccumulator {
 public:
  KahanAccumulator() = default;
  explicit KahanAccumulator(double v) : sum_(v) {}

  void add(double x)
  {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }
  double raw_sum() const { return sum_; }
  double compensation() const { return comp_; }

  void reset(double v = 0.0)
  {
    sum_  = v;
    comp_ = 0.0;
  }

 private:
  double sum_  = 0.0;
  double comp_ = 0.0;
};

// Same update step operating on external (sum, compensation) storage, for
// per-constraint accumulators kept in flat arrays.
inline void kahan_add(double& sum, double& comp, double x)
{
  const double t = sum + x;
  if (std::abs(sum) >= std::abs(x)) {
    comp += (sum - t) + x;
  } else {
    comp += (x - t) + sum;
  }
  sum = t;
}

// Root RNG type. One generator per run; parallel sections that need their own
// stream split deterministically from it.
using Rng = std::mt19937_64;

class Timer {
 public:
  Timer() : start_(clock_t::now()) {}

  double elapsed_sec() const
  {
    return std::chrono::duration<double>(clock_t::now() - start_).count();
  }

 private:
  using clock_t = std::chrono::steady_clock;
  clock_t::time_point start_;
};

// Wall-clock budget shared by nested stages. An infinite budget never expires.
class Deadline {
 public:
  Deadline() = default;
  explicit Deadline(double budget_sec) : budget_(budget_sec) {}

  static Deadline never() { return Deadline(); }

  bool expired() const { return timer_.elapsed_sec() >= budget_; }

  double remaining_sec() const
  {
    if (budget_ == kInf) return kInf;
    const double r = budget_ - timer_.elapsed_sec();
    return r > 0.0 ? r : 0.0;
  }

  double elapsed_sec() const { return timer_.elapsed_sec(); }
  double budget_sec() const { return budget_; }

 private:
  Timer timer_;
  double budget_ = kInf;
};

}  // namespace pulse

#include <algorithm>
#include <cmath>

#include "enginefault/errors.hpp"
#include "enginefault/testbed.hpp"

namespace enginefault {

namespace {

constexpr double kIdleRpm = 800.0;

// Two passes of a 5-point moving average; endpoints shrink the window.
void smooth(std::vector<double>& v) {
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> out(v.size());
    const int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - 2), hi = std::min(n - 1, i + 2);
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j) acc += v[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(i)] = acc / (hi - lo + 1);
    }
    v = std::move(out);
  }
}

}  // namespace

DrivingCycle generate_cycle(std::uint64_t seed, int duration_s) {
  if (duration_s < 10)
    throw InvalidArgumentError("cycle duration must be at least 10 s, got " +
                               std::to_string(duration_s));

  RngState rng = RngState(seed).fork(0x5e9dULL);
  const int n = duration_s + 1;
  std::vector<double> rpm(static_cast<std::size_t>(n), kIdleRpm);

  // Segment state machine over the 1 Hz grid.
  int t = 0;
  double cur = kIdleRpm;
  int phase = 0;  // 0 idle, 1 accelerate, 2 cruise, 3 decelerate
  int remaining = 3 + static_cast<int>(rng.uniform_int(10));
  double target = kIdleRpm;
  double wobble_freq = rng.uniform(0.05, 0.2);
  double wobble_phase = rng.uniform(0.0, 6.28);
  while (t < n) {
    switch (phase) {
      case 0: cur += rng.uniform(-4.0, 4.0); break;
      case 1: cur += (target - cur) / std::max(1, remaining); break;
      case 2:
        cur = target * (1.0 + 0.015 * std::sin(wobble_freq * t + wobble_phase)) +
              rng.uniform(-6.0, 6.0);
        break;
      case 3: cur += (kIdleRpm - cur) / std::max(1, remaining); break;
    }
    cur = std::max(cur, 0.0);
    rpm[static_cast<std::size_t>(t)] = cur;
    ++t;
    if (--remaining <= 0) {
      phase = (phase + 1) % 4;
      switch (phase) {
        case 0: remaining = 5 + static_cast<int>(rng.uniform_int(11)); break;
        case 1:
          remaining = 8 + static_cast<int>(rng.uniform_int(18));
          target = rng.uniform(1400.0, 3200.0);
          break;
        case 2:
          remaining = 15 + static_cast<int>(rng.uniform_int(31));
          wobble_freq = rng.uniform(0.05, 0.2);
          wobble_phase = rng.uniform(0.0, 6.28);
          break;
        case 3: remaining = 8 + static_cast<int>(rng.uniform_int(13)); break;
      }
    }
  }

  smooth(rpm);
  for (double& v : rpm) v = std::max(v, 0.0);

  DrivingCycle cycle;
  cycle.duration_s = duration_s;
  cycle.times.resize(static_cast<std::size_t>(n));
  cycle.speed_rpm = rpm;
  cycle.torque_nm.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    cycle.times[static_cast<std::size_t>(i)] = i;
    const double prev = rpm[static_cast<std::size_t>(std::max(0, i - 1))];
    const double drpm = rpm[static_cast<std::size_t>(i)] - prev;  // rpm per second
    double tq = 28.0 + 0.055 * (rpm[static_cast<std::size_t>(i)] - kIdleRpm) + 1.1 * drpm;
    cycle.torque_nm[static_cast<std::size_t>(i)] = std::max(tq, -60.0);
  }
  return cycle;
}

}  // namespace enginefault

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace enginefault {

// One signal table: a shared time axis plus `channels` columns stored
// row-major (rows() x channels). Covers everything from the 1-channel omega
// trace to the 13-channel engine state table.
struct Table {
  std::vector<double> times;
  std::vector<double> values;  // row-major, rows() * channels
  int channels = 0;
  std::vector<std::string> names;  // per-channel header names

  std::size_t rows() const { return times.size(); }
  double& at(std::size_t row, int ch) { return values[row * channels + ch]; }
  double at(std::size_t row, int ch) const { return values[row * channels + ch]; }

  // Extract one channel as a flat column.
  std::vector<double> column(int ch) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, ch);
    return out;
  }
};

enum class FaultSite { kActuator, kState, kSensor };
enum class FaultShape { kAbrupt, kPulse, kDrift, kPeriodic, kStuck, kGain };

const char* to_string(FaultSite site);
const char* to_string(FaultShape shape);
FaultSite fault_site_from_string(const std::string& s);
FaultShape fault_shape_from_string(const std::string& s);

// Infinite duration (ABRUPT/STUCK/GAIN/DRIFT persist to the end of the run).
inline constexpr double kDurationToEnd = -1.0;

struct FaultSpec {
  int fault_id = 0;  // 1..11
  FaultSite site = FaultSite::kActuator;
  int channel = 0;
  FaultShape shape = FaultShape::kAbrupt;
  double onset_s = 0.0;
  double duration_s = kDurationToEnd;
  double magnitude = 2.0;
  double period_s = 20.0;  // PERIODIC square-wave period

  bool lasts_to_end() const { return duration_s < 0.0; }
};

// Reference speed/torque trajectory fed to the engine simulation, 1 Hz.
struct DrivingCycle {
  int duration_s = 0;
  std::vector<double> times;       // 0..duration_s inclusive
  std::vector<double> speed_rpm;   // >= 0
  std::vector<double> torque_nm;
};

// One simulated engine run: the five signal tables plus fault metadata.
struct SimulationRun {
  Table omega;         // 1 channel, 1 Hz
  Table torque;        // 1 channel, 1 Hz
  Table input_signal;  // 5 channels
  Table output_signal; // 9 channels
  Table states_signal; // 13 channels
  std::optional<FaultSpec> fault;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  double noise_amp = 0.02;  // kept so state-fault injection can regenerate sensor noise
};

// Channel counts are part of the data contract.
inline constexpr int kInputChannels = 5;
inline constexpr int kOutputChannels = 9;
inline constexpr int kStateChannels = 13;
inline constexpr int kMergedChannels = 27;  // 5 inputs + 9 outputs + 13 states
inline constexpr int kNumClasses = 12;      // fault-free + 11 fault types

}  // namespace enginefault

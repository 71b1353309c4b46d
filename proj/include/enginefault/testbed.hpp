#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "enginefault/rng.hpp"
#include "enginefault/series.hpp"

namespace enginefault {

// Seeded stand-in for a standardized driving schedule: piecewise
// idle/accelerate/cruise/decelerate segments at 1 Hz, torque derived from
// speed and its rate of change. Same seed, same cycle.
DrivingCycle generate_cycle(std::uint64_t seed, int duration_s);

struct SimParams {
  double noise_amp = 0.02;     // measurement noise level, relative to channel scale
  double missing_rate = 0.0;   // fraction of input-table cells recorded as NaN
};

// Runs the engine model over the cycle: 5 actuator commands (2 Hz), 13
// first-order-lag internal states (2 Hz), 9 sensor readouts of those states
// (2 Hz), and 1 Hz omega/torque traces.
SimulationRun simulate_run(const DrivingCycle& cycle, std::uint64_t seed,
                           const SimParams& params = {});

// Sensor readouts as a pure function of (states, seed, noise level). Fault
// injection on a state channel calls this again so the regenerated sensor
// noise is identical sample for sample and only the propagated effect differs.
Table compute_outputs(const Table& states, std::uint64_t seed, double noise_amp);

// Applies the fault on [onset_s, onset_s + duration_s) of the channel named
// by (site, channel); negative duration means "to the end of the run".
// State-site faults additionally recompute the sensor table.
SimulationRun inject_fault(const SimulationRun& run, const FaultSpec& spec);

void write_run(const SimulationRun& run, const std::filesystem::path& dir);

// One entry per fault class: where the fault goes and how its per-run
// parameters are drawn.
struct FaultTemplate {
  int fault_id = 0;
  FaultSite site = FaultSite::kActuator;
  int channel = 0;
  FaultShape shape = FaultShape::kAbrupt;
  double onset_frac_lo = 0.2;  // onset drawn uniformly in [lo, hi] * run duration
  double onset_frac_hi = 0.5;
  double duration_s = kDurationToEnd;
  double magnitude = 2.0;
  double period_s = 20.0;
};

// The 11 built-in fault classes (ids 1..11), covering all three injection
// sites and all six shapes.
const std::vector<FaultTemplate>& fault_templates();

FaultSpec draw_fault(const FaultTemplate& tpl, double duration_s, RngState& rng);

struct CorpusConfig {
  std::filesystem::path out_dir;
  int runs_per_class = 2;
  int duration_s = 300;
  std::uint64_t seed = 1;
  double noise_amp = 0.02;
  double missing_rate = 0.0;
  int threads = 0;  // 0: use ENGINEFAULT_THREADS if set, else run sequentially
};

struct CorpusSummary {
  int runs_written = 0;
  int classes = 0;
};

// Writes <out_dir>/<fault_id>/run_<NNNN>/{omega,torque,input_signal,
// output_signal,states_signal}.csv + meta.json for every class 0..11.
CorpusSummary generate_dataset(const CorpusConfig& cfg);

}  // namespace enginefault

#include "enginefault/testbed.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "enginefault/csv_io.hpp"
#include "enginefault/errors.hpp"

namespace fs = std::filesystem;

namespace enginefault {

namespace {

constexpr double kIdleRpm = 800.0;
constexpr double kDt2Hz = 0.5;

// Per-table RNG stream ids; fork(seed, stream) keys every noise source.
constexpr std::uint64_t kStreamOmega = 2;
constexpr std::uint64_t kStreamTorque = 3;
constexpr std::uint64_t kStreamInputBase = 10;   // +channel
constexpr std::uint64_t kStreamOutputBase = 20;  // +channel
constexpr std::uint64_t kStreamMissing = 40;

const std::vector<std::string> kInputNames = {"throttle_pos", "wastegate_duty", "fuel_rate",
                                              "egr_valve", "inj_timing"};
const std::vector<std::string> kOutputNames = {"p_boost", "t_exhaust", "p_rail",
                                               "maf",     "egr_flow",  "t_coolant",
                                               "p_oil",   "lambda",    "t_intake"};

std::vector<std::string> state_names() {
  std::vector<std::string> names;
  for (int j = 0; j < kStateChannels; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "state_%02d", j);
    names.emplace_back(buf);
  }
  return names;
}

// Fixed plant parameters: lag time constants, input->state mixing, and the
// state each sensor reads. Drawn once from a pinned seed so they are compile
// constants in all but name.
struct EngineConsts {
  std::array<double, 13> tau{};
  std::array<std::array<double, 5>, 13> w{};
  std::array<double, 13> bias{};
  std::array<int, 9> map{};
  std::array<double, 9> gain{}, off{}, oscale{};
  std::array<double, 5> in_noise{};

  EngineConsts() {
    tau = {2.0, 3.0, 4.5, 6.0, 8.0, 10.0, 12.0, 3.5, 5.0, 15.0, 20.0, 7.0, 25.0};
    in_noise = {0.3, 0.3, 5.0, 0.25, 3.0};
    map = {0, 1, 2, 4, 5, 7, 8, 10, 12};
    RngState r(0xEC0FFEEULL);
    for (int j = 0; j < 13; ++j) {
      for (int i = 0; i < 5; ++i)
        w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
            (i == j % 5 ? 1.0 : 0.0) + 0.3 * r.uniform(-1.0, 1.0);
      bias[static_cast<std::size_t>(j)] = r.uniform(0.5, 2.0);
    }
    for (int k = 0; k < 9; ++k) {
      gain[static_cast<std::size_t>(k)] = r.uniform(0.6, 1.8);
      off[static_cast<std::size_t>(k)] = r.uniform(-1.0, 1.0);
      oscale[static_cast<std::size_t>(k)] = r.uniform(0.3, 1.0);
    }
  }
};

const EngineConsts& consts() {
  static const EngineConsts c;
  return c;
}

double channel_std(const Table& tbl, int ch) {
  double mean = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < tbl.rows(); ++r) {
    const double v = tbl.at(r, ch);
    if (std::isfinite(v)) {
      mean += v;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t r = 0; r < tbl.rows(); ++r) {
    const double v = tbl.at(r, ch);
    if (std::isfinite(v)) var += (v - mean) * (v - mean);
  }
  return std::sqrt(var / static_cast<double>(n));
}

int site_channel_count(FaultSite site) {
  switch (site) {
    case FaultSite::kActuator: return kInputChannels;
    case FaultSite::kState: return kStateChannels;
    case FaultSite::kSensor: return kOutputChannels;
  }
  return 0;
}

}  // namespace

Table compute_outputs(const Table& states, std::uint64_t seed, double noise_amp) {
  if (states.channels != kStateChannels)
    throw InvalidArgumentError("compute_outputs expects a 13-channel state table");
  const EngineConsts& ec = consts();
  Table out;
  out.times = states.times;
  out.channels = kOutputChannels;
  out.names = kOutputNames;
  out.values.assign(states.rows() * kOutputChannels, 0.0);
  for (int ch = 0; ch < kOutputChannels; ++ch) {
    RngState rng = RngState(seed).fork(kStreamOutputBase + static_cast<std::uint64_t>(ch));
    const auto c = static_cast<std::size_t>(ch);
    for (std::size_t r = 0; r < states.rows(); ++r)
      out.at(r, ch) = ec.gain[c] * states.at(r, ec.map[c]) + ec.off[c] +
                      rng.normal(0.0, noise_amp * ec.oscale[c]);
  }
  return out;
}

SimulationRun simulate_run(const DrivingCycle& cycle, std::uint64_t seed, const SimParams& params) {
  const std::size_t n1 = cycle.times.size();
  if (cycle.duration_s <= 0 || n1 < 2 || cycle.speed_rpm.size() != n1 ||
      cycle.torque_nm.size() != n1)
    throw InvalidArgumentError("malformed driving cycle");

  const EngineConsts& ec = consts();
  SimulationRun run;
  run.seed = seed;
  run.duration_s = cycle.duration_s;
  run.noise_amp = params.noise_amp;

  run.omega.times = cycle.times;
  run.omega.channels = 1;
  run.omega.names = {"omega_rpm"};
  run.omega.values.resize(n1);
  run.torque.times = cycle.times;
  run.torque.channels = 1;
  run.torque.names = {"torque_nm"};
  run.torque.values.resize(n1);
  {
    RngState ro = RngState(seed).fork(kStreamOmega);
    RngState rt = RngState(seed).fork(kStreamTorque);
    for (std::size_t i = 0; i < n1; ++i) {
      run.omega.values[i] = cycle.speed_rpm[i] + ro.normal(0.0, params.noise_amp * 40.0);
      run.torque.values[i] = cycle.torque_nm[i] + rt.normal(0.0, params.noise_amp * 8.0);
    }
  }

  // Finer 2 Hz grid for the actuator/state/sensor tables.
  const std::size_t n2 = static_cast<std::size_t>(cycle.duration_s) * 2 + 1;
  std::vector<double> t2(n2);
  for (std::size_t i = 0; i < n2; ++i) t2[i] = kDt2Hz * static_cast<double>(i);

  auto lerp_cycle = [&](const std::vector<double>& v, double t) {
    const double f = std::floor(t);
    const auto i = static_cast<std::size_t>(f);
    if (i + 1 >= n1) return v[n1 - 1];
    const double a = t - f;
    return v[i] * (1.0 - a) + v[i + 1] * a;
  };

  // Clean actuator commands as functions of the cycle.
  std::vector<std::array<double, 5>> clean(n2);
  double prev_ns = 0.0;
  for (std::size_t i = 0; i < n2; ++i) {
    const double rpm = lerp_cycle(cycle.speed_rpm, t2[i]);
    const double tq = lerp_cycle(cycle.torque_nm, t2[i]);
    const double ns = (rpm - kIdleRpm) / 2400.0;
    const double nt = tq / 250.0;
    const double dns = i == 0 ? 0.0 : (ns - prev_ns) / kDt2Hz;
    prev_ns = ns;
    clean[i][0] = 0.12 + 0.75 * ns + 0.10 * nt;
    clean[i][1] = 0.85 - 0.60 * nt;
    clean[i][2] = 2.0 + 14.0 * std::max(ns, 0.0) * std::max(nt, 0.0) + 3.0 * std::max(ns, 0.0);
    clean[i][3] = 0.45 + 0.25 * std::sin(3.0 * ns) - 0.20 * nt;
    clean[i][4] = 8.0 + 6.0 * ns + 2.5 * dns;
  }

  run.input_signal.times = t2;
  run.input_signal.channels = kInputChannels;
  run.input_signal.names = kInputNames;
  run.input_signal.values.assign(n2 * kInputChannels, 0.0);
  for (int ch = 0; ch < kInputChannels; ++ch) {
    RngState rng = RngState(seed).fork(kStreamInputBase + static_cast<std::uint64_t>(ch));
    for (std::size_t i = 0; i < n2; ++i)
      run.input_signal.at(i, ch) =
          clean[i][static_cast<std::size_t>(ch)] +
          rng.normal(0.0, params.noise_amp * ec.in_noise[static_cast<std::size_t>(ch)]);
  }

  // States: first-order lags of a fixed mix of the recorded (noisy) inputs.
  run.states_signal.times = t2;
  run.states_signal.channels = kStateChannels;
  run.states_signal.names = state_names();
  run.states_signal.values.assign(n2 * kStateChannels, 0.0);
  for (int j = 0; j < kStateChannels; ++j) {
    const auto js = static_cast<std::size_t>(j);
    double s = 0.0;
    for (std::size_t i = 0; i < n2; ++i) {
      double drive = ec.bias[js];
      for (int ch = 0; ch < kInputChannels; ++ch)
        drive += ec.w[js][static_cast<std::size_t>(ch)] * run.input_signal.at(i, ch);
      if (i == 0)
        s = drive;
      else
        s += (kDt2Hz / ec.tau[js]) * (drive - s);
      run.states_signal.at(i, j) = s;
    }
  }

  run.output_signal = compute_outputs(run.states_signal, seed, params.noise_amp);

  // Optional recording dropouts on the actuator table only; the plant above
  // consumed the unmasked values.
  if (params.missing_rate > 0.0) {
    RngState rng = RngState(seed).fork(kStreamMissing);
    for (double& v : run.input_signal.values)
      if (rng.uniform() < params.missing_rate) v = std::numeric_limits<double>::quiet_NaN();
  }

  return run;
}

SimulationRun inject_fault(const SimulationRun& run, const FaultSpec& spec) {
  if (spec.fault_id < 1 || spec.fault_id > 11)
    throw InvalidArgumentError("fault_id must be in [1,11], got " + std::to_string(spec.fault_id));
  const int nch = site_channel_count(spec.site);
  if (spec.channel < 0 || spec.channel >= nch)
    throw InvalidArgumentError(std::string("channel ") + std::to_string(spec.channel) +
                               " out of range for site " + to_string(spec.site));
  if (spec.onset_s < 0.0 || spec.onset_s >= run.duration_s)
    throw InvalidArgumentError("fault onset " + std::to_string(spec.onset_s) +
                               " outside run of " + std::to_string(run.duration_s) + " s");
  if (!spec.lasts_to_end() && spec.duration_s <= 0.0)
    throw InvalidArgumentError("fault duration must be positive or negative-for-persistent");
  if (spec.magnitude < 0.0) throw InvalidArgumentError("fault magnitude must be >= 0");

  SimulationRun out = run;
  out.fault = spec;
  if (spec.magnitude == 0.0) return out;  // zero magnitude: nothing to modify

  Table& tbl = spec.site == FaultSite::kActuator ? out.input_signal
               : spec.site == FaultSite::kState  ? out.states_signal
                                                 : out.output_signal;
  const double sd = std::max(channel_std(tbl, spec.channel), 1e-12);
  const double t_last = tbl.times.empty() ? 0.0 : tbl.times.back();
  const double t_end =
      spec.lasts_to_end() ? std::numeric_limits<double>::infinity()
                          : std::min(spec.onset_s + spec.duration_s, run.duration_s);
  const double ramp_end = spec.lasts_to_end() ? t_last : t_end;
  const double ramp_len = std::max(ramp_end - spec.onset_s, 1e-9);

  double stuck_val = 0.0;
  bool stuck_found = false;
  if (spec.shape == FaultShape::kStuck) {
    for (std::size_t r = 0; r < tbl.rows(); ++r)
      if (tbl.times[r] >= spec.onset_s) {
        stuck_val = tbl.at(r, spec.channel);
        stuck_found = true;
        break;
      }
  }

  for (std::size_t r = 0; r < tbl.rows(); ++r) {
    const double t = tbl.times[r];
    if (t < spec.onset_s || t >= t_end) continue;
    double& v = tbl.at(r, spec.channel);
    switch (spec.shape) {
      case FaultShape::kAbrupt: v += spec.magnitude * sd; break;
      case FaultShape::kPulse: v += spec.magnitude * sd; break;
      case FaultShape::kGain: v *= 1.0 + spec.magnitude; break;
      case FaultShape::kDrift: v += spec.magnitude * sd * (t - spec.onset_s) / ramp_len; break;
      case FaultShape::kPeriodic: {
        const double u = std::fmod(t - spec.onset_s, spec.period_s);
        v += (u < 0.5 * spec.period_s ? 1.0 : -1.0) * spec.magnitude * sd;
        break;
      }
      case FaultShape::kStuck:
        if (stuck_found) v = stuck_val;
        break;
    }
  }

  // A corrupted engine state shows up in every sensor that reads it.
  if (spec.site == FaultSite::kState)
    out.output_signal = compute_outputs(out.states_signal, run.seed, run.noise_amp);

  return out;
}

void write_run(const SimulationRun& run, const fs::path& dir) {
  try {
    fs::create_directories(dir);
    write_table_csv(run.omega, dir / "omega.csv");
    write_table_csv(run.torque, dir / "torque.csv");
    write_table_csv(run.input_signal, dir / "input_signal.csv");
    write_table_csv(run.output_signal, dir / "output_signal.csv");
    write_table_csv(run.states_signal, dir / "states_signal.csv");

    nlohmann::ordered_json meta;
    meta["fault_id"] = run.fault ? run.fault->fault_id : 0;
    if (run.fault) {
      meta["site"] = to_string(run.fault->site);
      meta["channel"] = run.fault->channel;
      meta["shape"] = to_string(run.fault->shape);
      meta["onset_s"] = run.fault->onset_s;
      meta["duration_s"] = run.fault->duration_s;
      meta["magnitude"] = run.fault->magnitude;
    }
    meta["seed"] = run.seed;
    std::ofstream out(dir / "meta.json", std::ios::binary);
    out << meta.dump(2) << "\n";
    if (!out) throw IoError("short write on meta.json");
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw IoError("failed to write run to " + dir.string() + ": " + e.what());
  }
}

const std::vector<FaultTemplate>& fault_templates() {
  static const std::vector<FaultTemplate> tpls = {
      {1, FaultSite::kActuator, 0, FaultShape::kAbrupt, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {2, FaultSite::kActuator, 2, FaultShape::kGain, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {3, FaultSite::kActuator, 1, FaultShape::kStuck, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {4, FaultSite::kActuator, 3, FaultShape::kPulse, 0.65, 0.80, 30.0, 2.0, 20.0},
      {5, FaultSite::kState, 2, FaultShape::kDrift, 0.20, 0.35, kDurationToEnd, 2.0, 20.0},
      {6, FaultSite::kState, 5, FaultShape::kAbrupt, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {7, FaultSite::kState, 10, FaultShape::kPeriodic, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {8, FaultSite::kSensor, 2, FaultShape::kAbrupt, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {9, FaultSite::kSensor, 0, FaultShape::kGain, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
      {10, FaultSite::kSensor, 5, FaultShape::kPulse, 0.65, 0.80, 30.0, 2.0, 20.0},
      {11, FaultSite::kSensor, 7, FaultShape::kStuck, 0.20, 0.50, kDurationToEnd, 2.0, 20.0},
  };
  return tpls;
}

FaultSpec draw_fault(const FaultTemplate& tpl, double duration_s, RngState& rng) {
  FaultSpec spec;
  spec.fault_id = tpl.fault_id;
  spec.site = tpl.site;
  spec.channel = tpl.channel;
  spec.shape = tpl.shape;
  spec.onset_s = rng.uniform(tpl.onset_frac_lo, tpl.onset_frac_hi) * duration_s;
  spec.duration_s = tpl.duration_s;
  spec.magnitude = tpl.magnitude;
  spec.period_s = tpl.period_s;
  return spec;
}

CorpusSummary generate_dataset(const CorpusConfig& cfg) {
  if (cfg.runs_per_class <= 0)
    throw InvalidArgumentError("runs_per_class must be positive");
  if (cfg.out_dir.empty()) throw InvalidArgumentError("corpus output directory not set");

  // One driving schedule per corpus: runs differ in noise and fault draw.
  const DrivingCycle cycle = generate_cycle(cfg.seed, cfg.duration_s);
  const auto& tpls = fault_templates();

  struct Job {
    int cls;
    int run;
  };
  std::vector<Job> jobs;
  for (int cls = 0; cls < kNumClasses; ++cls)
    for (int run = 0; run < cfg.runs_per_class; ++run) jobs.push_back({cls, run});

  auto work = [&](const Job& job) {
    RngState base = RngState(cfg.seed).fork(
        0xD5ULL + static_cast<std::uint64_t>(job.cls) * 100000ULL +
        static_cast<std::uint64_t>(job.run));
    SimParams params{cfg.noise_amp, cfg.missing_rate};
    SimulationRun run = simulate_run(cycle, base.seed, params);
    if (job.cls > 0) {
      RngState frng = base.fork(0xFAULL);
      const FaultSpec spec =
          draw_fault(tpls[static_cast<std::size_t>(job.cls - 1)], cfg.duration_s, frng);
      run = inject_fault(run, spec);
    }
    char name[32];
    std::snprintf(name, sizeof name, "run_%04d", job.run);
    write_run(run, cfg.out_dir / std::to_string(job.cls) / name);
  };

  int threads = cfg.threads;
  if (threads <= 0) {
    const char* env = std::getenv("ENGINEFAULT_THREADS");
    threads = env ? std::max(1, std::atoi(env)) : 1;
    threads = std::min(threads, 16);
  }

  if (threads == 1) {
    for (const Job& job : jobs) work(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          try {
            work(jobs[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
            return;
          }
        }
      });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  return {static_cast<int>(jobs.size()), kNumClasses};
}

}  // namespace enginefault

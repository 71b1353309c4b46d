#include "enginefault/series.hpp"

#include "enginefault/errors.hpp"

namespace enginefault {

const char* to_string(FaultSite site) {
  switch (site) {
    case FaultSite::kActuator: return "ACTUATOR";
    case FaultSite::kState: return "STATE";
    case FaultSite::kSensor: return "SENSOR";
  }
  return "?";
}

const char* to_string(FaultShape shape) {
  switch (shape) {
    case FaultShape::kAbrupt: return "ABRUPT";
    case FaultShape::kPulse: return "PULSE";
    case FaultShape::kDrift: return "DRIFT";
    case FaultShape::kPeriodic: return "PERIODIC";
    case FaultShape::kStuck: return "STUCK";
    case FaultShape::kGain: return "GAIN";
  }
  return "?";
}

FaultSite fault_site_from_string(const std::string& s) {
  if (s == "ACTUATOR") return FaultSite::kActuator;
  if (s == "STATE") return FaultSite::kState;
  if (s == "SENSOR") return FaultSite::kSensor;
  throw InvalidArgumentError("unknown fault site: " + s);
}

FaultShape fault_shape_from_string(const std::string& s) {
  if (s == "ABRUPT") return FaultShape::kAbrupt;
  if (s == "PULSE") return FaultShape::kPulse;
  if (s == "DRIFT") return FaultShape::kDrift;
  if (s == "PERIODIC") return FaultShape::kPeriodic;
  if (s == "STUCK") return FaultShape::kStuck;
  if (s == "GAIN") return FaultShape::kGain;
  throw InvalidArgumentError("unknown fault shape: " + s);
}

}  // namespace enginefault

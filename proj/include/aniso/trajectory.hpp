#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aniso/model.hpp"
#include "aniso/vec.hpp"

namespace aniso {

enum class BreakdownKind { RootLoss, Stopping };

inline std::string to_string(BreakdownKind k) {
  return k == BreakdownKind::RootLoss ? "RootLoss" : "Stopping";
}

// A velocity discontinuity of the first-order model. Positions are continuous
// through the event; only the velocity of `particle` jumps.
struct BreakdownEvent {
  double time = 0.0;
  std::size_t particle = 0;
  BreakdownKind kind = BreakdownKind::RootLoss;
  double theta_pre = 0.0;
  double r_pre = 0.0;
  double theta_post = 0.0;
  double r_post = 0.0;
  bool ambiguous = false;  // both breakdown conditions held within tolerance
};

enum class Termination { ReachedTEnd, CollisionGuard, Error };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::ReachedTEnd: return "ReachedTEnd";
    case Termination::CollisionGuard: return "CollisionGuard";
    case Termination::Error: return "Error";
  }
  return "?";
}

struct TrajectoryLog {
  std::vector<PhaseState<2>> samples;
  std::vector<BreakdownEvent> events;
  Termination termination = Termination::ReachedTEnd;
  std::string message;                // diagnostic for CollisionGuard / Error
  std::vector<std::string> warnings;
};

}  // namespace aniso

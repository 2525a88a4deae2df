#pragma once

#include <optional>

#include "fidex/kinematics.hpp"
#include "fidex/observation.hpp"

namespace fidex {

/// What the control loop needs from a robot: a position command in encoder
/// units, the raw encoder readings, and one frame of marker detections.
/// SimulatedRobot implements it; a hardware driver or a recorded session can
/// stand in for it.
class RobotInterface {
public:
  virtual ~RobotInterface() = default;

  virtual const KinematicChain& chain() const = 0;
  virtual const ExoskeletonRegistry& registry() const = 0;

  /// Drives the joints until the encoders read `encoder_target`. Returns true
  /// when the target had to be clamped into the joint limits.
  virtual bool command(const JointVector& encoder_target) = 0;
  virtual JointVector read_encoders() = 0;
  virtual DetectionFrame acquire_detections() = 0;

  /// True joint state, when the implementation knows it (simulation).
  virtual std::optional<JointVector> ground_truth() const { return std::nullopt; }
};

}  // namespace fidex

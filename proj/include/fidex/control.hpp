#pragma once

/// @file
/// State-estimating control loop. Per target:
///   1. refresh the calibration offset dtheta = theta* - theta_enc from the
///      current frame;
///   2. command the offset-corrected target, target - dtheta (encoder units);
///   3. estimate the reached state theta*';
///   4. optionally command the delta move 2 * target - theta*' (again
///      offset-corrected).
/// Robots are driven through RobotInterface, so a hardware driver or a
/// recorded session can replace the simulator.

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fidex/error.hpp"
#include "fidex/estimator.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"
#include "fidex/robot_interface.hpp"
#include "fidex/stats.hpp"

namespace fidex {

enum class ControlMode { Naive, CalibrateOnly, Full };

inline const char* to_string(ControlMode m) {
  switch (m) {
    case ControlMode::Naive: return "naive";
    case ControlMode::CalibrateOnly: return "calibrate-only";
    case ControlMode::Full: return "full";
  }
  return "unknown";
}

inline ControlMode control_mode_from_string(const std::string& s) {
  if (s == "naive") return ControlMode::Naive;
  if (s == "calibrate-only") return ControlMode::CalibrateOnly;
  if (s == "full") return ControlMode::Full;
  throw Error(ErrorKind::Validation, "unknown control mode '" + s + "'");
}

/// Ground-truth state after a move and its end-effector error to the target.
struct ReachedState {
  JointVector theta;
  RigidTransform end_effector;
  PoseError error;
};

struct ControlStepReport {
  JointVector target;
  ControlMode mode = ControlMode::Full;
  std::optional<JointVector> calibration_offset;  // dtheta applied to the commands
  JointVector naive_command;                      // encoder units
  std::optional<ReachedState> naive_reached;      // present when ground truth is available
  std::optional<JointVector> estimated_after_naive;
  std::vector<JointVector> delta_commands;        // encoder units, one per delta iteration
  bool refinement_executed = false;
  std::optional<ReachedState> refined_reached;    // present iff refinement executed (and ground truth known)
  bool clamped = false;
  std::vector<std::string> errors;

  /// End-effector error of the final state of this step.
  std::optional<PoseError> final_error() const {
    if (refined_reached) return refined_reached->error;
    if (naive_reached) return naive_reached->error;
    return std::nullopt;
  }
};

namespace detail {

inline std::optional<ReachedState> measure(const RobotInterface& robot, const JointVector& target) {
  const std::optional<JointVector> truth = robot.ground_truth();
  if (!truth) return std::nullopt;
  const RigidTransform reached = forward_kinematics(robot.chain(), *truth).back();
  const RigidTransform wanted = forward_kinematics(robot.chain(), target).back();
  return ReachedState{*truth, reached, pose_error(reached, wanted)};
}

inline void check_target(const KinematicChain& chain, const JointVector& target) {
  chain.check_size(target);
  if (!chain.within_limits(target)) throw Error(ErrorKind::Validation, "control target outside joint limits");
}

inline EstimateReport estimate_current(RobotInterface& robot, const SolverConfig& cfg, const JointVector& init) {
  const DetectionFrame frame = robot.acquire_detections();
  const ObservationSet obs = build_observation_set(frame.detections, robot.registry(), cfg.min_confidence);
  return recover_joints(robot.chain(), obs, init, cfg);
}

}  // namespace detail

/// Refreshes dtheta from the current frame. Falls back to `fallback` (or
/// zeros) when the frame cannot be estimated; the failure is appended to
/// `errors`.
inline JointVector calibrate_on_the_fly(RobotInterface& robot, const SolverConfig& cfg,
                                        const std::optional<JointVector>& fallback, std::vector<std::string>& errors) {
  const JointVector encoders = robot.read_encoders();
  try {
    const EstimateReport est = detail::estimate_current(robot, cfg, encoders);
    return compute_calibration(est.theta_star, encoders);
  } catch (const Error& e) {
    errors.push_back(std::string("calibration: ") + e.what());
    return fallback.value_or(JointVector::Zero(encoders.size()));
  }
}

/// Bare move: command the raw target and measure.
inline ControlStepReport naive_move(RobotInterface& robot, const JointVector& target) {
  detail::check_target(robot.chain(), target);
  ControlStepReport r;
  r.target = target;
  r.mode = ControlMode::Naive;
  r.naive_command = target;
  r.clamped = robot.command(target);
  r.naive_reached = detail::measure(robot, target);
  return r;
}

/// One control step with on-the-fly calibration and, when `use_delta`, the
/// delta refinement repeated `delta_iterations` times. Estimation failures
/// after the naive move are recorded in the report; the naive result is kept.
inline ControlStepReport refine_to_target(RobotInterface& robot, const JointVector& target, const SolverConfig& cfg,
                                          bool use_delta, int delta_iterations = 1,
                                          const std::optional<JointVector>& fallback_calibration = std::nullopt) {
  detail::check_target(robot.chain(), target);
  if (delta_iterations < 1) throw Error(ErrorKind::Validation, "delta_iterations must be >= 1");
  ControlStepReport r;
  r.target = target;
  r.mode = use_delta ? ControlMode::Full : ControlMode::CalibrateOnly;

  const JointVector dtheta = calibrate_on_the_fly(robot, cfg, fallback_calibration, r.errors);
  r.calibration_offset = dtheta;

  r.naive_command = target - dtheta;
  r.clamped = robot.command(r.naive_command);
  r.naive_reached = detail::measure(robot, target);

  // Joint-space command; each round shifts it by the remaining error, which
  // for the first round gives target - (theta*' - target).
  JointVector joint_command = target;
  const int rounds = use_delta ? delta_iterations : 1;
  for (int k = 0; k < rounds; ++k) {
    EstimateReport est;
    try {
      est = detail::estimate_current(robot, cfg, robot.read_encoders() + dtheta);
    } catch (const Error& e) {
      r.errors.push_back(std::string("estimation: ") + e.what());
      break;
    }
    if (k == 0) r.estimated_after_naive = est.theta_star;
    if (!use_delta) break;
    joint_command = robot.chain().clamp(joint_command - (est.theta_star - target));
    r.delta_commands.push_back(joint_command - dtheta);
    r.clamped = robot.command(r.delta_commands.back()) || r.clamped;
    r.refinement_executed = true;
  }
  if (r.refinement_executed) r.refined_reached = detail::measure(robot, target);
  return r;
}

struct EpisodeReport {
  ControlMode mode = ControlMode::Full;
  std::vector<ControlStepReport> steps;
  ErrorStats translation;  // over final end-effector errors with ground truth
  ErrorStats rotation;
  std::size_t failed_steps = 0;
};

/// Runs `targets` in order on one robot; the robot's state (backlash history
/// included) carries across steps and per-step failures do not stop the run.
inline EpisodeReport run_episode(RobotInterface& robot, const std::vector<JointVector>& targets,
                                 const SolverConfig& cfg, ControlMode mode, int delta_iterations = 1) {
  for (const JointVector& t : targets) detail::check_target(robot.chain(), t);
  EpisodeReport ep;
  ep.mode = mode;
  std::optional<JointVector> last_calibration;
  std::vector<double> trans;
  std::vector<double> rot;
  for (const JointVector& t : targets) {
    ControlStepReport step = mode == ControlMode::Naive
                                 ? naive_move(robot, t)
                                 : refine_to_target(robot, t, cfg, mode == ControlMode::Full, delta_iterations,
                                                    last_calibration);
    if (step.calibration_offset) last_calibration = step.calibration_offset;
    if (!step.errors.empty()) ++ep.failed_steps;
    if (auto e = step.final_error()) {
      trans.push_back(e->translation);
      rot.push_back(e->rotation);
    }
    ep.steps.push_back(std::move(step));
  }
  ep.translation = ErrorStats::of(trans);
  ep.rotation = ErrorStats::of(rot);
  return ep;
}

/// RobotInterface over a recorded session: frames and encoder readings are
/// replayed in order and commands are logged. Lets recorded detections files
/// drive the control loop in place of the simulator.
class ReplayRobot : public RobotInterface {
public:
  struct Sample {
    DetectionFrame frame;
    JointVector encoders;
  };

  ReplayRobot(const KinematicChain& chain, const ExoskeletonRegistry& registry, std::vector<Sample> samples)
      : chain_(chain), registry_(registry), samples_(samples.begin(), samples.end()) {}

  const KinematicChain& chain() const override { return chain_; }
  const ExoskeletonRegistry& registry() const override { return registry_; }

  bool command(const JointVector& encoder_target) override {
    commands_.push_back(encoder_target);
    const JointVector clamped = chain_.clamp(encoder_target);
    return !(clamped.array() == encoder_target.array()).all();
  }

  JointVector read_encoders() override { return current().encoders; }

  DetectionFrame acquire_detections() override {
    DetectionFrame f = current().frame;
    samples_.pop_front();
    return f;
  }

  const std::vector<JointVector>& commands() const { return commands_; }

private:
  const Sample& current() const {
    if (samples_.empty()) throw Error(ErrorKind::Unobservable, "recorded session exhausted");
    return samples_.front();
  }

  const KinematicChain& chain_;
  const ExoskeletonRegistry& registry_;
  std::deque<Sample> samples_;
  std::vector<JointVector> commands_;
};

// ---------------------------------------------------------------------------
// Report documents

inline Json reached_to_json(const std::optional<ReachedState>& s) {
  if (!s) return nullptr;
  return Json{{"theta", to_json(s->theta)},
              {"end_effector", to_json(s->end_effector)},
              {"translation_error_m", s->error.translation},
              {"rotation_error_rad", s->error.rotation}};
}

inline Json control_step_to_json(const ControlStepReport& r) {
  Json deltas = Json::array();
  for (const JointVector& c : r.delta_commands) deltas.push_back(to_json(c));
  return Json{{"target", to_json(r.target)},
              {"mode", to_string(r.mode)},
              {"calibration_offset", r.calibration_offset ? to_json(*r.calibration_offset) : Json(nullptr)},
              {"naive_command", to_json(r.naive_command)},
              {"naive_reached", reached_to_json(r.naive_reached)},
              {"estimated_after_naive", r.estimated_after_naive ? to_json(*r.estimated_after_naive) : Json(nullptr)},
              {"delta_commands", std::move(deltas)},
              {"refinement_executed", r.refinement_executed},
              {"refined_reached", reached_to_json(r.refined_reached)},
              {"clamped", r.clamped},
              {"errors", r.errors}};
}

inline Json episode_to_json(const EpisodeReport& ep) {
  Json steps = Json::array();
  for (const ControlStepReport& s : ep.steps) steps.push_back(control_step_to_json(s));
  return Json{{"mode", to_string(ep.mode)},
              {"steps", std::move(steps)},
              {"summary",
               {{"translation_m", ep.translation.to_json()},
                {"rotation_rad", ep.rotation.to_json()},
                {"failed_steps", ep.failed_steps},
                {"step_count", ep.steps.size()}}}};
}

}  // namespace fidex

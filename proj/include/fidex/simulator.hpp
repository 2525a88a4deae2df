#pragma once

/// @file
/// Desk-scale stand-in for a low-cost arm: hysteresis backlash, constant
/// encoder offsets, noisy marker detections and occlusion.
///
/// Joint model per joint, with motor position m (what the encoder measures,
/// before its offset) and backlash half-width b:
///   - the link angle theta always lies in [m - b, m + b];
///   - moving the motor drags theta only once the slack is taken up, i.e.
///     theta <- clamp(theta, m - b, m + b);
///   - the encoder reads m + encoder_offset.
/// Motor and link are both kept inside the joint limits.
///
/// Marker noise is drawn in the marker's own frame: the detected pose is
/// (R * exp(w), t + R * v) with w ~ N(0, sigma_r^2 I) and v ~ N(0, sigma_t^2 I).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fidex/error.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"
#include "fidex/observation.hpp"
#include "fidex/robot_interface.hpp"

namespace fidex {

inline constexpr double kLowCostBacklash = 0.02;       // rad
inline constexpr double kLowCostOffsetRange = 0.05;    // rad, offsets ~ U(-r, r)
inline constexpr double kLowCostTranslationSigma = 0.002;  // m
inline constexpr double kLowCostRotationSigma = 0.01;      // rad

/// SplitMix64 finalizer over (seed, stream); used to give every trial and
/// every simulator its own reproducible random stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct NoiseModel {
  JointVector encoder_offset;      // rad, constant per episode
  JointVector backlash_halfwidth;  // rad, per joint
  double marker_translation_sigma = 0.0;
  double marker_rotation_sigma = 0.0;
  std::vector<bool> occluded;                // d + 1 entries (0 = base); empty = none
  std::vector<double> dropout_probability;   // d + 1 entries; empty = none
  std::uint64_t rng_seed = 0;

  static NoiseModel none(std::size_t dof) {
    NoiseModel n;
    n.encoder_offset = JointVector::Zero(static_cast<Eigen::Index>(dof));
    n.backlash_halfwidth = JointVector::Zero(static_cast<Eigen::Index>(dof));
    return n;
  }

  /// The synthetic low-cost profile; encoder offsets are drawn from `seed`.
  static NoiseModel low_cost(std::size_t dof, std::uint64_t seed) {
    NoiseModel n = none(dof);
    n.backlash_halfwidth.setConstant(kLowCostBacklash);
    n.marker_translation_sigma = kLowCostTranslationSigma;
    n.marker_rotation_sigma = kLowCostRotationSigma;
    n.rng_seed = seed;
    n.encoder_offset = draw_offsets(dof, kLowCostOffsetRange, derive_seed(seed, 0xCA11B));
    return n;
  }

  static JointVector draw_offsets(std::size_t dof, double range, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-range, range);
    JointVector v(static_cast<Eigen::Index>(dof));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    return v;
  }

  void validate(std::size_t dof) const {
    const auto d = static_cast<Eigen::Index>(dof);
    if (encoder_offset.size() != d || backlash_halfwidth.size() != d) {
      throw Error(ErrorKind::DimensionMismatch, "noise model joint vectors must have one entry per joint");
    }
    if ((backlash_halfwidth.array() < 0.0).any()) throw Error(ErrorKind::Validation, "backlash must be >= 0");
    if (marker_translation_sigma < 0.0 || marker_rotation_sigma < 0.0) {
      throw Error(ErrorKind::Validation, "marker noise sigmas must be >= 0");
    }
    if (!occluded.empty() && occluded.size() != dof + 1) {
      throw Error(ErrorKind::DimensionMismatch, "occlusion mask must cover base + every link");
    }
    if (!dropout_probability.empty()) {
      if (dropout_probability.size() != dof + 1) {
        throw Error(ErrorKind::DimensionMismatch, "dropout probabilities must cover base + every link");
      }
      for (double p : dropout_probability) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Validation, "dropout probability must lie in [0, 1]");
      }
    }
  }
};

class SimulatedRobot : public RobotInterface {
public:
  /// `camera_pose` is T_robot_cam. The robot starts at rest with the link
  /// angles equal to the motor positions `initial_motor` (zeros by default).
  SimulatedRobot(KinematicChain chain, ExoskeletonRegistry registry, NoiseModel noise, RigidTransform camera_pose,
                 std::optional<JointVector> initial_motor = std::nullopt)
      : chain_(std::move(chain)),
        registry_(std::move(registry)),
        noise_(std::move(noise)),
        camera_pose_(camera_pose),
        rng_(noise_.rng_seed) {
    noise_.validate(chain_.dof());
    motor_ = chain_.clamp(initial_motor.value_or(JointVector::Zero(static_cast<Eigen::Index>(chain_.dof()))));
    theta_ = motor_;
    direction_ = Eigen::VectorXi::Zero(motor_.size());
  }

  const KinematicChain& chain() const override { return chain_; }
  const ExoskeletonRegistry& registry() const override { return registry_; }
  const NoiseModel& noise() const { return noise_; }
  const RigidTransform& camera_pose() const { return camera_pose_; }

  const JointVector& true_theta() const { return theta_; }
  const JointVector& motor_position() const { return motor_; }
  /// theta - motor, within +-backlash_halfwidth.
  JointVector slack() const { return theta_ - motor_; }
  /// Sign of the last motor motion per joint (-1, 0, +1).
  const Eigen::VectorXi& last_direction() const { return direction_; }

  std::optional<JointVector> ground_truth() const override { return theta_; }

  bool command(const JointVector& encoder_target) override {
    chain_.check_size(encoder_target);
    const JointVector wanted = encoder_target - noise_.encoder_offset;
    const JointVector motor = chain_.clamp(wanted);
    const bool clamped = !(motor.array() == wanted.array()).all();
    for (Eigen::Index i = 0; i < motor.size(); ++i) {
      if (motor[i] != motor_[i]) direction_[i] = motor[i] > motor_[i] ? 1 : -1;
    }
    motor_ = motor;
    const JointVector& b = noise_.backlash_halfwidth;
    theta_ = chain_.clamp(theta_.cwiseMax(motor_ - b).cwiseMin(motor_ + b));
    return clamped;
  }

  JointVector read_encoders() override { return motor_ + noise_.encoder_offset; }

  void set_occlusion(std::vector<bool> occluded) {
    if (!occluded.empty() && occluded.size() != chain_.dof() + 1) {
      throw Error(ErrorKind::DimensionMismatch, "occlusion mask must cover base + every link");
    }
    noise_.occluded = std::move(occluded);
  }

  /// Marker detections of the current state. Noise and dropout draws happen
  /// for every registered marker, occluded or not, so the random stream does
  /// not depend on the occlusion pattern.
  std::vector<MarkerDetection> simulate_detections() {
    const std::vector<RigidTransform> fk = forward_kinematics(chain_, theta_);
    const RigidTransform camera_from_robot = inverse(camera_pose_);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<MarkerDetection> out;
    for (const RegistryEntry& e : registry_.entries()) {
      const RigidTransform link = e.link_index == 0 ? camera_from_robot : compose(camera_from_robot, fk[e.link_index - 1]);
      RigidTransform marker = compose(link, inverse(e.marker_to_link()));
      Vec3 w;
      Vec3 v;
      for (int k = 0; k < 3; ++k) w[k] = noise_.marker_rotation_sigma * normal(rng_);
      for (int k = 0; k < 3; ++k) v[k] = noise_.marker_translation_sigma * normal(rng_);
      const double u = uniform(rng_);
      if (!noise_.occluded.empty() && noise_.occluded[e.link_index]) continue;
      if (!noise_.dropout_probability.empty() && u < noise_.dropout_probability[e.link_index]) continue;
      marker.translation += marker.rotation * v;
      marker.rotation = marker.rotation * Rotation::exp(w);
      out.push_back({e.marker_id, marker, 1.0});
    }
    return out;
  }

  DetectionFrame acquire_detections() override {
    return {"sim-" + std::to_string(frames_++), simulate_detections()};
  }

  /// Ground-truth end-effector (last link) pose in the robot frame.
  RigidTransform end_effector_pose() const { return forward_kinematics(chain_, theta_).back(); }

private:
  KinematicChain chain_;
  ExoskeletonRegistry registry_;
  NoiseModel noise_;
  RigidTransform camera_pose_;
  std::mt19937_64 rng_;
  JointVector motor_;
  JointVector theta_;
  Eigen::VectorXi direction_;
  std::uint64_t frames_ = 0;
};

// ---------------------------------------------------------------------------
// Scenario documents

struct OcclusionChange {
  std::size_t step = 0;
  std::vector<bool> occluded;  // d + 1 entries
};

struct Scenario {
  KinematicChain chain;
  ExoskeletonRegistry registry;
  NoiseModel noise;
  // When set, each seed draws fresh offsets uniformly from +-range instead of
  // using noise.encoder_offset.
  std::optional<double> encoder_offset_range;
  RigidTransform camera_pose;
  std::optional<JointVector> initial_position;
  std::vector<JointVector> episode;
  std::vector<OcclusionChange> occlusion_schedule;
  std::string chain_ref;
  std::string registry_ref;
  // Solver rotation weight suggested by the scenario (m/rad), e.g. matched to
  // its marker noise. Command-line flags take precedence.
  std::optional<double> rot_weight;

  /// Noise model for one run, fully determined by `seed`.
  NoiseModel noise_for_seed(std::uint64_t seed) const {
    NoiseModel n = noise;
    n.rng_seed = seed;
    if (encoder_offset_range) n.encoder_offset = NoiseModel::draw_offsets(chain.dof(), *encoder_offset_range, derive_seed(seed, 0xCA11B));
    return n;
  }

  SimulatedRobot make_robot(std::uint64_t seed) const {
    return SimulatedRobot(chain, registry, noise_for_seed(seed), camera_pose, initial_position);
  }

  /// Occlusion mask in force at `step`, if the schedule changes it there.
  std::optional<std::vector<bool>> occlusion_at(std::size_t step) const {
    for (const OcclusionChange& c : occlusion_schedule) {
      if (c.step == step) return c.occluded;
    }
    return std::nullopt;
  }
};

namespace detail {

inline std::vector<bool> occlusion_from_names(const Json& names, const KinematicChain& chain, const std::string& path) {
  as_array(names, path);
  std::vector<bool> mask(chain.dof() + 1, false);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string name = as_string(names[i], json_detail::index_path(path, i));
    auto idx = name == "base" ? std::optional<std::size_t>(0) : chain.link_index(name);
    if (!idx) throw Error(ErrorKind::Validation, json_detail::index_path(path, i) + ": unknown link '" + name + "'");
    mask[*idx] = true;
  }
  return mask;
}

inline JointVector scalar_or_vector(const Json& j, std::size_t dof, const std::string& path) {
  if (j.is_number()) return JointVector::Constant(static_cast<Eigen::Index>(dof), as_number(j, path));
  return as_fixed_vector(j, dof, path);
}

}  // namespace detail

/// Parses a scenario; `base_dir` resolves chain_ref / registry_ref.
inline Scenario scenario_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  const std::string chain_ref = as_string(require_field(doc, "chain_ref", ""), "chain_ref");
  const std::string registry_ref = as_string(require_field(doc, "registry_ref", ""), "registry_ref");
  KinematicChain chain = load_chain_file((base_dir / chain_ref).string());
  ExoskeletonRegistry registry = load_registry_file((base_dir / registry_ref).string(), chain);
  const std::size_t d = chain.dof();

  const Json& nm = require_field(doc, "noise_model", "");
  NoiseModel noise = NoiseModel::none(d);
  std::optional<double> offset_range;
  if (nm.contains("profile")) {
    const std::string profile = as_string(nm["profile"], "noise_model.profile");
    if (profile == "low_cost") {
      noise = NoiseModel::low_cost(d, 0);
      offset_range = kLowCostOffsetRange;
    } else if (profile != "none") {
      throw Error(ErrorKind::Validation, "noise_model.profile: unknown profile '" + profile + "'");
    }
  }
  if (nm.contains("encoder_offset")) {
    noise.encoder_offset = as_fixed_vector(nm["encoder_offset"], d, "noise_model.encoder_offset");
    offset_range.reset();
  }
  if (nm.contains("encoder_offset_range")) {
    offset_range = as_number(nm["encoder_offset_range"], "noise_model.encoder_offset_range");
    if (*offset_range < 0.0) throw Error(ErrorKind::Validation, "noise_model.encoder_offset_range: must be >= 0");
  }
  if (nm.contains("backlash_halfwidth")) {
    noise.backlash_halfwidth = detail::scalar_or_vector(nm["backlash_halfwidth"], d, "noise_model.backlash_halfwidth");
  }
  if (nm.contains("marker_translation_sigma")) {
    noise.marker_translation_sigma = as_number(nm["marker_translation_sigma"], "noise_model.marker_translation_sigma");
  }
  if (nm.contains("marker_rotation_sigma")) {
    noise.marker_rotation_sigma = as_number(nm["marker_rotation_sigma"], "noise_model.marker_rotation_sigma");
  }
  if (nm.contains("occluded_links")) {
    noise.occluded = detail::occlusion_from_names(nm["occluded_links"], chain, "noise_model.occluded_links");
  }
  if (nm.contains("dropout_probability")) {
    const Json& p = nm["dropout_probability"];
    if (p.is_number()) {
      noise.dropout_probability.assign(d + 1, as_number(p, "noise_model.dropout_probability"));
    } else {
      const Eigen::VectorXd v = as_fixed_vector(p, d + 1, "noise_model.dropout_probability");
      noise.dropout_probability.assign(v.data(), v.data() + v.size());
    }
  }
  if (nm.contains("rng_seed")) noise.rng_seed = static_cast<std::uint64_t>(as_integer(nm["rng_seed"], "noise_model.rng_seed"));
  if (offset_range) noise.encoder_offset = NoiseModel::draw_offsets(d, *offset_range, derive_seed(noise.rng_seed, 0xCA11B));
  noise.validate(d);

  RigidTransform camera_pose = transform_from_json(require_field(doc, "camera_pose", ""), "camera_pose");

  std::optional<JointVector> initial;
  if (doc.contains("initial_position")) initial = as_fixed_vector(doc["initial_position"], d, "initial_position");

  std::vector<JointVector> episode;
  if (doc.contains("episode")) {
    const Json& ep = as_array(doc["episode"], "episode");
    for (std::size_t i = 0; i < ep.size(); ++i) episode.push_back(as_fixed_vector(ep[i], d, json_detail::index_path("episode", i)));
  }

  std::vector<OcclusionChange> schedule;
  if (doc.contains("occlusion_schedule")) {
    const Json& os = as_array(doc["occlusion_schedule"], "occlusion_schedule");
    for (std::size_t i = 0; i < os.size(); ++i) {
      const std::string path = json_detail::index_path("occlusion_schedule", i);
      const long long step = as_integer(require_field(os[i], "step", path), path + ".step");
      if (step < 0) throw Error(ErrorKind::Validation, path + ".step: must be >= 0");
      schedule.push_back({static_cast<std::size_t>(step),
                          detail::occlusion_from_names(require_field(os[i], "occluded_links", path), chain,
                                                       path + ".occluded_links")});
    }
  }

  std::optional<double> rot_weight;
  if (doc.contains("solver")) {
    const Json& solver = doc["solver"];
    if (!solver.is_object()) throw Error(ErrorKind::Validation, "solver: expected an object");
    if (solver.contains("rot_weight")) {
      rot_weight = as_number(solver["rot_weight"], "solver.rot_weight");
      if (!(*rot_weight > 0.0)) throw Error(ErrorKind::Validation, "solver.rot_weight: must be positive");
    }
  }

  return Scenario{std::move(chain), std::move(registry), std::move(noise), offset_range, camera_pose,
                  std::move(initial), std::move(episode), std::move(schedule), chain_ref, registry_ref, rot_weight};
}

inline Scenario load_scenario_file(const std::string& path) {
  return scenario_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

}  // namespace fidex

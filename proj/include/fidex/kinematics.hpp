#pragma once

/// @file
/// Serial revolute chains: forward kinematics to per-link poses and body-frame
/// pose Jacobians.
///
/// Joint model: each joint applies its fixed `parent_transform` (parent link
/// frame -> joint frame at zero angle) followed by a rotation of theta about
/// `axis`, expressed in the joint frame. The joint frame is the child link's
/// frame. Link 0 is the base with identity pose; links 1..d follow the joints.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fidex/error.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"

namespace fidex {

/// Joint angles in radians, one per joint of the chain.
using JointVector = Eigen::VectorXd;

/// Pose Jacobian, 6 x d, rows ordered (rotation; translation).
using PoseJacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline constexpr double kAxisNormTolerance = 1e-9;

struct JointSpec {
  std::string name;
  std::string child_link;
  // Only "revolute" is supported; the field is kept in the schema for
  // prismatic joints later.
  std::string type = "revolute";
  RigidTransform parent_transform;
  Vec3 axis = Vec3::UnitZ();
  double lower = -std::numbers::pi;
  double upper = std::numbers::pi;
  // The child link's observation is ignored by the estimator.
  bool exclude_from_residuals = false;

  RigidTransform local_transform(double theta) const {
    return compose(parent_transform, RigidTransform::from_rotation(Rotation::exp(axis * theta)));
  }
};

class KinematicChain {
public:
  KinematicChain(std::string name, std::string base_link, std::vector<JointSpec> joints)
      : name_(std::move(name)), joints_(std::move(joints)) {
    if (joints_.empty()) throw Error(ErrorKind::Validation, "chain '" + name_ + "' has no joints");
    link_names_.push_back(std::move(base_link));
    std::unordered_set<std::string> seen_links{link_names_.front()};
    std::unordered_set<std::string> seen_joints;
    for (const JointSpec& j : joints_) {
      const std::string where = "joint '" + j.name + "': ";
      if (j.type != "revolute") throw Error(ErrorKind::Validation, where + "unsupported joint type '" + j.type + "'");
      if (std::abs(j.axis.norm() - 1.0) > kAxisNormTolerance) throw Error(ErrorKind::Validation, where + "non-unit axis");
      if (!(j.lower <= j.upper)) throw Error(ErrorKind::Validation, where + "inverted limits");
      if (!seen_joints.insert(j.name).second) throw Error(ErrorKind::Validation, where + "duplicate joint name");
      if (!seen_links.insert(j.child_link).second) {
        throw Error(ErrorKind::Validation, where + "duplicate link name '" + j.child_link + "'");
      }
      link_names_.push_back(j.child_link);
    }
  }

  const std::string& name() const { return name_; }
  std::size_t dof() const { return joints_.size(); }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const JointSpec& joint(std::size_t i) const { return joints_.at(i); }

  /// d + 1 names; index 0 is the base.
  const std::vector<std::string>& link_names() const { return link_names_; }

  std::optional<std::size_t> link_index(const std::string& link) const {
    for (std::size_t i = 0; i < link_names_.size(); ++i) {
      if (link_names_[i] == link) return i;
    }
    return std::nullopt;
  }

  JointVector lower_limits() const {
    JointVector v(static_cast<Eigen::Index>(dof()));
    for (std::size_t i = 0; i < dof(); ++i) v[static_cast<Eigen::Index>(i)] = joints_[i].lower;
    return v;
  }

  JointVector upper_limits() const {
    JointVector v(static_cast<Eigen::Index>(dof()));
    for (std::size_t i = 0; i < dof(); ++i) v[static_cast<Eigen::Index>(i)] = joints_[i].upper;
    return v;
  }

  JointVector clamp(const JointVector& theta) const {
    check_size(theta);
    return theta.cwiseMax(lower_limits()).cwiseMin(upper_limits());
  }

  /// Projection used by the solver: an out-of-range angle is first shifted by
  /// the multiple of 2*pi that lands it inside the limits (same joint pose),
  /// and clamped only when no such shift exists.
  JointVector project(const JointVector& theta) const {
    check_size(theta);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    JointVector out = theta;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const JointSpec& j = joints_[static_cast<std::size_t>(i)];
      double v = out[i];
      if (v < j.lower || v > j.upper) {
        const double shifted = v - two_pi * std::ceil((v - j.upper) / two_pi);
        if (shifted >= j.lower && std::isfinite(shifted)) v = shifted;
      }
      out[i] = std::clamp(v, j.lower, j.upper);
    }
    return out;
  }

  bool within_limits(const JointVector& theta) const {
    check_size(theta);
    return (theta.array() >= lower_limits().array()).all() && (theta.array() <= upper_limits().array()).all();
  }

  void check_size(const JointVector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dof()) {
      throw Error(ErrorKind::DimensionMismatch, "joint vector has " + std::to_string(theta.size()) +
                                                    " entries, chain '" + name_ + "' has " +
                                                    std::to_string(dof()) + " joints");
    }
  }

private:
  std::string name_;
  std::vector<JointSpec> joints_;
  std::vector<std::string> link_names_;
};

/// Link poses in the base frame for links 1..d (element j-1 is link j).
/// Computed as pose_j = pose_{j-1} * local_j.
inline std::vector<RigidTransform> forward_kinematics(const KinematicChain& chain, const JointVector& theta) {
  chain.check_size(theta);
  std::vector<RigidTransform> poses;
  poses.reserve(chain.dof());
  RigidTransform current;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    current = compose(current, chain.joint(i).local_transform(theta[static_cast<Eigen::Index>(i)]));
    poses.push_back(current);
  }
  return poses;
}

/// Base-frame joint axes and origins alongside the link poses. Shared by the
/// Jacobian and the estimator so one FK pass serves both.
struct ChainState {
  std::vector<RigidTransform> link_poses;
  std::vector<Vec3> axes;     // joint axis i in the base frame
  std::vector<Vec3> origins;  // joint frame origin i in the base frame
};

inline ChainState evaluate_chain(const KinematicChain& chain, const JointVector& theta) {
  chain.check_size(theta);
  ChainState s;
  s.link_poses = forward_kinematics(chain, theta);
  s.axes.reserve(chain.dof());
  s.origins.reserve(chain.dof());
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    // The joint's own rotation leaves its axis and origin fixed, so the
    // link pose already carries both.
    const RigidTransform& frame = s.link_poses[i];
    s.axes.push_back(frame.rotation * chain.joint(i).axis);
    s.origins.push_back(frame.translation);
  }
  return s;
}

/// Body-frame Jacobian of link `link` (1-based) from a precomputed state.
inline PoseJacobian link_pose_jacobian(const ChainState& state, std::size_t link) {
  const std::size_t d = state.link_poses.size();
  if (link < 1 || link > d) {
    throw Error(ErrorKind::DimensionMismatch, "link index " + std::to_string(link) + " outside 1.." + std::to_string(d));
  }
  PoseJacobian jac = PoseJacobian::Zero(6, static_cast<Eigen::Index>(d));
  const RigidTransform& pose = state.link_poses[link - 1];
  const Rotation r_inv = pose.rotation.inverse();
  for (std::size_t i = 0; i < link; ++i) {
    const Vec3& a = state.axes[i];
    const auto col = static_cast<Eigen::Index>(i);
    jac.block<3, 1>(0, col) = r_inv * a;
    jac.block<3, 1>(3, col) = r_inv * a.cross(pose.translation - state.origins[i]);
  }
  return jac;
}

/// Column i is the body-frame twist of link `link` per unit theta_i, so that
/// T_link(theta + h e_i) ~= T_link(theta) * exp(h * column_i). Columns of
/// joints downstream of the link are zero.
inline PoseJacobian link_pose_jacobian(const KinematicChain& chain, const JointVector& theta, std::size_t link) {
  if (link < 1 || link > chain.dof()) {
    throw Error(ErrorKind::DimensionMismatch,
                "link index " + std::to_string(link) + " outside 1.." + std::to_string(chain.dof()));
  }
  return link_pose_jacobian(evaluate_chain(chain, theta), link);
}

// ---------------------------------------------------------------------------
// Chain-spec documents

inline KinematicChain chain_from_json(const Json& doc) {
  const std::string name = as_string(require_field(doc, "name", ""), "name");
  std::string base_link = "base";
  if (doc.contains("base_link")) base_link = as_string(doc["base_link"], "base_link");
  const Json& joints = as_array(require_field(doc, "joints", ""), "joints");
  std::vector<JointSpec> specs;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const std::string path = json_detail::index_path("joints", i);
    const Json& j = joints[i];
    JointSpec spec;
    spec.name = as_string(require_field(j, "name", path), path + ".name");
    spec.child_link = j.contains("child_link") ? as_string(j["child_link"], path + ".child_link") : spec.name;
    if (j.contains("type")) spec.type = as_string(j["type"], path + ".type");
    spec.parent_transform = transform_from_json(require_field(j, "parent_transform", path), path + ".parent_transform");
    const Eigen::VectorXd axis = as_fixed_vector(require_field(j, "axis", path), 3, path + ".axis");
    spec.axis = Vec3(axis[0], axis[1], axis[2]);
    const Eigen::VectorXd limits = as_fixed_vector(require_field(j, "limits_rad", path), 2, path + ".limits_rad");
    spec.lower = limits[0];
    spec.upper = limits[1];
    if (j.contains("exclude_from_residuals")) {
      spec.exclude_from_residuals = as_bool(j["exclude_from_residuals"], path + ".exclude_from_residuals");
    }
    specs.push_back(std::move(spec));
  }
  return KinematicChain(name, base_link, std::move(specs));
}

inline Json chain_to_json(const KinematicChain& chain) {
  Json joints = Json::array();
  for (const JointSpec& j : chain.joints()) {
    Json entry{{"name", j.name},
               {"child_link", j.child_link},
               {"type", j.type},
               {"parent_transform", to_json(j.parent_transform)},
               {"axis", to_json(j.axis)},
               {"limits_rad", Json::array({j.lower, j.upper})}};
    if (j.exclude_from_residuals) entry["exclude_from_residuals"] = true;
    joints.push_back(std::move(entry));
  }
  return Json{{"name", chain.name()}, {"base_link", chain.link_names().front()}, {"joints", std::move(joints)}};
}

inline KinematicChain load_chain(const std::string& text, const std::string& source = "<chain>") {
  return chain_from_json(parse_json_text(text, source));
}

inline KinematicChain load_chain_file(const std::string& path) { return load_chain(read_text_file(path), path); }

inline std::string save_chain(const KinematicChain& chain) { return chain_to_json(chain).dump(2) + "\n"; }

}  // namespace fidex

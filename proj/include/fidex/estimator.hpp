#pragma once

/// @file
/// Joint-state recovery from observed link poses, camera extrinsics from the
/// base marker, and encoder calibration offsets.
///
/// The joint solve minimizes sum_j w_j * se3_distance(T_j(theta), P_j)^2 over
/// the visible links with Levenberg-Marquardt. Each link contributes the
/// 6-vector residual
///   [ t_j(theta) - t_obs ;  rot_weight * log(R_obs^T R_j(theta)) ]
/// whose squared norm equals se3_distance^2 exactly, so the reported cost and
/// the metric agree.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include "fidex/error.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"
#include "fidex/observation.hpp"

namespace fidex {

struct SolverConfig {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  double rot_weight = kDefaultRotWeight;
  bool enforce_joint_limits = true;
  double damping_init = 1e-3;
  // Rotation weight of a first solve whose result seeds the final one; the
  // stage is skipped unless it exceeds rot_weight.
  double continuation_rot_weight = 1.0;
  // Per-link weights (one per link 1..d); empty means uniform 1.
  std::vector<double> link_weights;
  // Detections below this confidence are treated as not visible.
  double min_confidence = 0.0;

  void validate() const {
    if (max_iterations < 1) throw Error(ErrorKind::Validation, "max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0) || !(step_tolerance > 0.0)) throw Error(ErrorKind::Validation, "tolerances must be positive");
    if (!(rot_weight > 0.0)) throw Error(ErrorKind::Validation, "rot_weight must be positive");
    if (!(continuation_rot_weight >= 0.0)) throw Error(ErrorKind::Validation, "continuation_rot_weight must be >= 0");
    if (!(damping_init > 0.0)) throw Error(ErrorKind::Validation, "damping_init must be positive");
    for (double w : link_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::Validation, "link weights must be finite and non-negative");
    }
  }

  Json to_json() const {
    return Json{{"max_iterations", max_iterations},
                {"gradient_tolerance", gradient_tolerance},
                {"step_tolerance", step_tolerance},
                {"rot_weight", rot_weight},
                {"enforce_joint_limits", enforce_joint_limits},
                {"damping_init", damping_init},
                {"continuation_rot_weight", continuation_rot_weight},
                {"link_weights", link_weights},
                {"min_confidence", min_confidence}};
  }

  std::string hash() const { return fnv1a_hex(to_json().dump()); }
};

struct LinkResidual {
  std::size_t link = 0;  // 1-based
  double translation = 0.0;
  double rotation = 0.0;
};

struct EstimateReport {
  JointVector theta_star;
  bool converged = false;
  int iterations = 0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  std::string stop_reason;
  std::vector<LinkResidual> per_link_residuals;
  int restarts = 0;  // extra solves started from a joint's opposite limit
  // Start cost, then one entry per accepted step, of the solve that produced theta_star.
  std::vector<double> cost_history;
  // Set when the visible links may not pin down theta uniquely (rank-deficient
  // Jacobian, or >= 3 unobserved joints between consecutive visible links).
  bool degenerate_risk = false;
  double conditioning = 0.0;  // smallest / largest singular value of the Jacobian
  std::optional<RigidTransform> camera_pose;  // T_robot_cam
  std::optional<JointVector> calibration_offset;
  std::optional<JointVector> encoder_readings;
};

/// The least-squares problem behind recover_joints. Exposed for diagnostics
/// and for checking the assembled gradient.
class LinkAlignmentProblem {
public:
  struct Evaluation {
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;  // residual_size x d; empty when not requested
    double cost = 0.0;
  };

  LinkAlignmentProblem(const KinematicChain& chain, const ObservationSet& obs, const SolverConfig& cfg)
      : chain_(chain), obs_(obs), rot_weight_(cfg.rot_weight) {
    if (obs.links.size() != chain.dof()) {
      throw Error(ErrorKind::DimensionMismatch, "observation set covers " + std::to_string(obs.links.size()) +
                                                    " links, chain has " + std::to_string(chain.dof()));
    }
    if (!cfg.link_weights.empty() && cfg.link_weights.size() != chain.dof()) {
      throw Error(ErrorKind::DimensionMismatch, "link_weights must have one entry per link");
    }
    for (std::size_t j = 1; j <= chain.dof(); ++j) {
      if (!obs.links[j - 1].visible || chain.joint(j - 1).exclude_from_residuals) continue;
      const double w = cfg.link_weights.empty() ? 1.0 : cfg.link_weights[j - 1];
      if (w == 0.0) continue;
      links_.push_back(j);
      sqrt_weights_.push_back(std::sqrt(w));
    }
  }

  /// 1-based indices of the links contributing residuals.
  const std::vector<std::size_t>& active_links() const { return links_; }
  std::size_t residual_size() const { return 6 * links_.size(); }

  Evaluation evaluate(const JointVector& theta, bool with_jacobian) const {
    const ChainState state = evaluate_chain(chain_, theta);
    const auto d = static_cast<Eigen::Index>(chain_.dof());
    Evaluation ev;
    ev.residual.resize(static_cast<Eigen::Index>(residual_size()));
    if (with_jacobian) ev.jacobian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(residual_size()), d);
    for (std::size_t k = 0; k < links_.size(); ++k) {
      const std::size_t j = links_[k];
      const RigidTransform& pose = state.link_poses[j - 1];
      const RigidTransform& observed = obs_.links[j - 1].pose;
      const double s = sqrt_weights_[k];
      const auto row = static_cast<Eigen::Index>(6 * k);
      const Vec3 rot_err = (observed.rotation.inverse() * pose.rotation).log();
      ev.residual.segment<3>(row) = s * (pose.translation - observed.translation);
      ev.residual.segment<3>(row + 3) = s * rot_weight_ * rot_err;
      if (with_jacobian) {
        const PoseJacobian body = link_pose_jacobian(state, j);
        const Mat3 r = pose.rotation.matrix();
        ev.jacobian.block(row, 0, 3, d) = s * r * body.bottomRows<3>();
        ev.jacobian.block(row + 3, 0, 3, d) = s * rot_weight_ * so3_right_jacobian_inverse(rot_err) * body.topRows<3>();
      }
    }
    ev.cost = ev.residual.squaredNorm();
    return ev;
  }

  double cost(const JointVector& theta) const { return evaluate(theta, false).cost; }

  /// Gradient of cost() with respect to theta: 2 J^T r.
  Eigen::VectorXd gradient(const JointVector& theta) const {
    const Evaluation ev = evaluate(theta, true);
    return 2.0 * ev.jacobian.transpose() * ev.residual;
  }

private:
  const KinematicChain& chain_;
  const ObservationSet& obs_;
  double rot_weight_;
  std::vector<std::size_t> links_;
  std::vector<double> sqrt_weights_;
};

namespace detail {

inline constexpr double kRankTolerance = 1e-6;
inline constexpr double kMaxDamping = 1e12;
inline constexpr double kMinDamping = 1e-15;
// Unobserved joints between consecutive visible links at which distinct
// joint configurations can reproduce both link poses.
inline constexpr std::size_t kAmbiguousGap = 3;

inline bool has_ambiguous_gap(const std::vector<std::size_t>& visible) {
  std::size_t previous = 0;
  for (std::size_t j : visible) {
    if (j - previous >= kAmbiguousGap) return true;
    previous = j;
  }
  return false;
}

}  // namespace detail

namespace detail {

struct SolveResult {
  JointVector theta;
  LinkAlignmentProblem::Evaluation ev;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::string stop_reason;
  std::vector<double> cost_history;
};

inline SolveResult levenberg_marquardt(const KinematicChain& chain, const LinkAlignmentProblem& problem,
                                       JointVector theta, const SolverConfig& cfg) {
  const auto d = static_cast<Eigen::Index>(chain.dof());
  SolveResult out;
  out.ev = problem.evaluate(theta, true);
  if (!std::isfinite(out.ev.cost)) throw NumericalFailure("initial cost is not finite", theta);
  out.cost_history.push_back(out.ev.cost);

  double lambda = cfg.damping_init;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
  out.stop_reason = "max-iterations";
  while (true) {
    const Eigen::VectorXd jtr = out.ev.jacobian.transpose() * out.ev.residual;
    out.gradient_norm = 2.0 * jtr.norm();
    if (out.gradient_norm < cfg.gradient_tolerance) {
      out.converged = true;
      out.stop_reason = "gradient-tolerance";
      break;
    }
    if (out.iterations >= cfg.max_iterations) break;

    const Eigen::MatrixXd jtj = out.ev.jacobian.transpose() * out.ev.jacobian;
    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      const Eigen::VectorXd delta = (jtj + lambda * identity).ldlt().solve(-jtr);
      JointVector candidate = theta + delta;
      if (cfg.enforce_joint_limits) candidate = chain.project(candidate);
      const double step = (candidate - theta).norm();
      if (step < cfg.step_tolerance) {
        out.converged = true;
        out.stop_reason = "step-tolerance";
        stop = true;
        break;
      }
      if (!candidate.allFinite()) throw NumericalFailure("solver step is not finite", theta);
      LinkAlignmentProblem::Evaluation next = problem.evaluate(candidate, true);
      if (!std::isfinite(next.cost)) throw NumericalFailure("cost became non-finite", theta);
      if (next.cost < out.ev.cost) {
        theta = std::move(candidate);
        out.ev = std::move(next);
        lambda = std::max(lambda * 0.1, kMinDamping);
        accepted = true;
        ++out.iterations;
        out.cost_history.push_back(out.ev.cost);
      } else {
        lambda *= 10.0;
        if (lambda > kMaxDamping) {
          out.stop_reason = "damping-limit";
          stop = true;
          break;
        }
      }
    }
    if (stop) break;
  }
  out.theta = std::move(theta);
  return out;
}

// Joints whose value sits on a limit.
inline std::vector<Eigen::Index> joints_at_limit(const KinematicChain& chain, const JointVector& theta) {
  std::vector<Eigen::Index> at;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const JointSpec& j = chain.joint(static_cast<std::size_t>(i));
    if (j.upper - j.lower > 0.0 && (theta[i] <= j.lower || theta[i] >= j.upper)) at.push_back(i);
  }
  return at;
}

inline SolveResult solve_with_restarts(const KinematicChain& chain, const LinkAlignmentProblem& problem,
                                       const JointVector& theta, const SolverConfig& cfg, int& iterations,
                                       int& restarts) {
  SolveResult best = levenberg_marquardt(chain, problem, theta, cfg);
  iterations += best.iterations;
  if (!cfg.enforce_joint_limits) return best;
  for (std::size_t round = 0; round < chain.dof(); ++round) {
    bool improved = false;
    for (Eigen::Index i : joints_at_limit(chain, best.theta)) {
      JointVector start = best.theta;
      const JointSpec& j = chain.joint(static_cast<std::size_t>(i));
      start[i] = start[i] >= j.upper ? j.lower : j.upper;
      SolveResult trial = levenberg_marquardt(chain, problem, start, cfg);
      iterations += trial.iterations;
      ++restarts;
      if (trial.ev.cost < best.ev.cost) {
        best = std::move(trial);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return best;
}

}  // namespace detail

/// Recovers the joint vector that best aligns forward kinematics with the
/// observed link poses. `init` defaults to zeros (clamped into the limits when
/// enforce_joint_limits is set).
///
/// With limits enforced, a descent path can end on a limit when the shorter
/// way round a joint is blocked. The solve is then repeated with the pinned
/// joints started from their opposite limit, keeping the lowest cost found.
/// A first solve at continuation_rot_weight, where link orientations dominate,
/// seeds the final solve and keeps the arm out of mirrored-elbow minima.
inline EstimateReport recover_joints(const KinematicChain& chain, const ObservationSet& obs,
                                     const std::optional<JointVector>& init, const SolverConfig& cfg) {
  cfg.validate();
  const LinkAlignmentProblem problem(chain, obs, cfg);
  if (problem.active_links().empty()) {
    throw Error(ErrorKind::Unobservable, "no visible link observations to fit");
  }
  const auto d = static_cast<Eigen::Index>(chain.dof());
  JointVector theta = init ? *init : JointVector::Zero(d);
  chain.check_size(theta);
  if (!theta.allFinite()) throw Error(ErrorKind::Validation, "initial joint vector is not finite");
  if (cfg.enforce_joint_limits) theta = chain.clamp(theta);

  int total_iterations = 0;
  int restarts = 0;
  if (cfg.continuation_rot_weight > cfg.rot_weight) {
    SolverConfig coarse = cfg;
    coarse.rot_weight = cfg.continuation_rot_weight;
    const LinkAlignmentProblem coarse_problem(chain, obs, coarse);
    const detail::SolveResult first =
        detail::solve_with_restarts(chain, coarse_problem, theta, coarse, total_iterations, restarts);
    theta = first.theta;
  }
  detail::SolveResult best = detail::solve_with_restarts(chain, problem, theta, cfg, total_iterations, restarts);

  EstimateReport report;
  report.theta_star = best.theta;
  report.converged = best.converged;
  report.iterations = total_iterations;
  report.restarts = restarts;
  report.final_cost = best.ev.cost;
  report.gradient_norm = best.gradient_norm;
  report.stop_reason = best.stop_reason;
  report.cost_history = std::move(best.cost_history);

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(best.ev.jacobian);
  const Eigen::VectorXd sv = svd.singularValues();
  report.conditioning = sv.size() > 0 && sv[0] > 0.0 ? sv[sv.size() - 1] / sv[0] : 0.0;
  if (sv.size() < d) report.conditioning = 0.0;
  report.degenerate_risk =
      report.conditioning < detail::kRankTolerance || detail::has_ambiguous_gap(problem.active_links());

  const std::vector<RigidTransform> poses = forward_kinematics(chain, report.theta_star);
  for (std::size_t j : obs.visible_links()) {
    const PoseError e = pose_error(poses[j - 1], obs.links[j - 1].pose);
    report.per_link_residuals.push_back({j, e.translation, e.rotation});
  }
  return report;
}

/// T_robot_cam = (T_cam_marker * T_marker_exo * T_exo_robot)^-1 from the base marker.
inline RigidTransform recover_camera_pose(const ObservationSet& obs, const ExoskeletonRegistry& reg) {
  if (!obs.base_detection) throw Error(ErrorKind::BaseUnobserved, "base marker not observed");
  return inverse(link_pose_from_marker(*obs.base_detection, reg));
}

/// Calibration offset theta* - theta_enc.
inline JointVector compute_calibration(const JointVector& theta_star, const JointVector& theta_enc) {
  if (theta_star.size() != theta_enc.size()) {
    throw Error(ErrorKind::DimensionMismatch, "calibration needs equal-length joint vectors (" +
                                                  std::to_string(theta_star.size()) + " vs " +
                                                  std::to_string(theta_enc.size()) + ")");
  }
  return theta_star - theta_enc;
}

enum class InitPolicy { Zeros, Encoders };

/// Full single-frame pipeline: observations, joints, extrinsics and (when
/// encoder readings are given) the calibration offset.
inline EstimateReport estimate_frame(const KinematicChain& chain, const ExoskeletonRegistry& reg,
                                     const std::vector<MarkerDetection>& dets,
                                     const std::optional<JointVector>& encoders, const SolverConfig& cfg,
                                     InitPolicy policy) {
  if (encoders) chain.check_size(*encoders);
  const ObservationSet obs = build_observation_set(dets, reg, cfg.min_confidence);
  std::optional<JointVector> init;
  if (policy == InitPolicy::Encoders && encoders) init = *encoders;
  EstimateReport report = recover_joints(chain, obs, init, cfg);
  report.camera_pose = recover_camera_pose(obs, reg);
  if (encoders) {
    report.encoder_readings = *encoders;
    report.calibration_offset = compute_calibration(report.theta_star, *encoders);
  }
  return report;
}

inline Json estimate_report_to_json(const EstimateReport& r, const KinematicChain& chain) {
  Json residuals = Json::array();
  for (const LinkResidual& lr : r.per_link_residuals) {
    residuals.push_back(Json{{"link", chain.link_names()[lr.link]},
                             {"link_index", lr.link},
                             {"translation_m", lr.translation},
                             {"rotation_rad", lr.rotation}});
  }
  Json joints = Json::array();
  for (const JointSpec& j : chain.joints()) joints.push_back(j.name);
  Json doc{{"joint_names", std::move(joints)},
           {"theta_star", to_json(r.theta_star)},
           {"converged", r.converged},
           {"iterations", r.iterations},
           {"restarts", r.restarts},
           {"final_cost", r.final_cost},
           {"gradient_norm", r.gradient_norm},
           {"stop_reason", r.stop_reason},
           {"degenerate_risk", r.degenerate_risk},
           {"conditioning", r.conditioning},
           {"per_link_residuals", std::move(residuals)},
           {"cost_history", r.cost_history}};
  doc["camera_pose"] = r.camera_pose ? to_json(*r.camera_pose) : Json(nullptr);
  doc["calibration_offset"] = r.calibration_offset ? to_json(*r.calibration_offset) : Json(nullptr);
  doc["encoder_readings"] = r.encoder_readings ? to_json(*r.encoder_readings) : Json(nullptr);
  return doc;
}

}  // namespace fidex

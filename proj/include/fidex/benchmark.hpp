#pragma once

/// @file
/// Seeded simulation studies comparing encoder-only forward kinematics with
/// vision-based estimation, and the control-loop modes against each other.
/// Every trial owns its simulator and derives its random stream from
/// (seed, trial index), so results do not depend on the thread count.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fidex/control.hpp"
#include "fidex/estimator.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"
#include "fidex/simulator.hpp"
#include "fidex/stats.hpp"
#include "fidex/version.hpp"

namespace fidex {

/// Fraction of each joint range that random configurations are drawn from.
inline constexpr double kRandomRangeFraction = 0.8;

inline JointVector random_configuration(const KinematicChain& chain, std::mt19937_64& rng,
                                        double fraction = kRandomRangeFraction) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  JointVector v(static_cast<Eigen::Index>(chain.dof()));
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const JointSpec& j = chain.joint(i);
    const double mid = 0.5 * (j.lower + j.upper);
    const double half = 0.5 * (j.upper - j.lower) * fraction;
    v[static_cast<Eigen::Index>(i)] = mid + half * u(rng);
  }
  return v;
}

struct MethodSummary {
  std::string method;
  ErrorStats translation;  // end-effector, m
  ErrorStats rotation;     // end-effector, rad
  std::vector<double> joint_rms;  // rad, per joint
  std::size_t trials = 0;
  std::size_t failures = 0;  // estimation errors (fell back to encoders)
  std::size_t flagged = 0;   // estimates marked degenerate_risk

  Json to_json() const {
    return Json{{"method", method},
                {"translation_m", translation.to_json()},
                {"rotation_rad", rotation.to_json()},
                {"joint_rms_rad", joint_rms},
                {"trials", trials},
                {"failures", failures},
                {"flagged", flagged}};
  }
};

/// Per-trial outcome of one method.
struct MethodOutcome {
  PoseError end_effector;
  JointVector joint_error;
  bool failed = false;
  bool flagged = false;
};

inline MethodSummary summarize(std::string name, const std::vector<MethodOutcome>& outcomes) {
  MethodSummary s;
  s.method = std::move(name);
  s.trials = outcomes.size();
  std::vector<double> trans;
  std::vector<double> rot;
  for (const MethodOutcome& o : outcomes) {
    trans.push_back(o.end_effector.translation);
    rot.push_back(o.end_effector.rotation);
    s.failures += o.failed ? 1 : 0;
    s.flagged += o.flagged ? 1 : 0;
  }
  s.translation = ErrorStats::of(trans);
  s.rotation = ErrorStats::of(rot);
  if (!outcomes.empty()) {
    const Eigen::Index d = outcomes.front().joint_error.size();
    for (Eigen::Index i = 0; i < d; ++i) {
      std::vector<double> col;
      for (const MethodOutcome& o : outcomes) col.push_back(o.joint_error[i]);
      s.joint_rms.push_back(rms(col));
    }
  }
  return s;
}

/// Runs `fn(i)` for i in [0, n) over `threads` workers; results land by index.
template <typename Result, typename Fn>
std::vector<Result> run_trials(std::size_t n, unsigned threads, Fn fn) {
  std::vector<Result> out(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) out[i] = fn(i);
    });
  }
  for (std::thread& th : pool) th.join();
  return out;
}

// ---------------------------------------------------------------------------
// State estimation

struct StateTrial {
  MethodOutcome encoder_only;
  MethodOutcome ours_no_enc;
  MethodOutcome ours_enc;
};

struct StateBenchmarkOptions {
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Overrides the scenario's occlusion mask (d + 1 entries, 0 = base).
  std::optional<std::vector<bool>> occlusion;
};

namespace detail {

inline MethodOutcome score(const KinematicChain& chain, const JointVector& estimate, const JointVector& truth) {
  MethodOutcome o;
  o.end_effector = pose_error(forward_kinematics(chain, estimate).back(), forward_kinematics(chain, truth).back());
  o.joint_error = estimate - truth;
  return o;
}

inline MethodOutcome vision_estimate(const KinematicChain& chain, const std::optional<ObservationSet>& obs,
                                     const std::optional<JointVector>& init, const JointVector& encoders,
                                     const JointVector& truth, const SolverConfig& cfg) {
  if (obs) {
    try {
      const EstimateReport r = recover_joints(chain, *obs, init, cfg);
      MethodOutcome o = score(chain, r.theta_star, truth);
      o.flagged = r.degenerate_risk;
      return o;
    } catch (const Error&) {
    }
  }
  MethodOutcome o = score(chain, encoders, truth);
  o.failed = true;
  return o;
}

}  // namespace detail

/// One trial: random start, random target approached through the backlash,
/// one frame of detections, then the three estimators.
inline StateTrial run_state_trial(const Scenario& sc, const SolverConfig& cfg, std::uint64_t trial_seed,
                                  const std::optional<std::vector<bool>>& occlusion) {
  std::mt19937_64 rng(derive_seed(trial_seed, 1));
  const JointVector start = random_configuration(sc.chain, rng);
  const JointVector target = random_configuration(sc.chain, rng);
  SimulatedRobot robot(sc.chain, sc.registry, sc.noise_for_seed(trial_seed), sc.camera_pose, start);
  if (occlusion) robot.set_occlusion(*occlusion);
  robot.command(target);

  const JointVector truth = robot.true_theta();
  const JointVector encoders = robot.read_encoders();
  std::optional<ObservationSet> obs;
  try {
    obs = build_observation_set(robot.simulate_detections(), robot.registry(), cfg.min_confidence);
  } catch (const Error&) {
  }

  StateTrial t;
  t.encoder_only = detail::score(sc.chain, encoders, truth);
  t.ours_no_enc = detail::vision_estimate(sc.chain, obs, std::nullopt, encoders, truth, cfg);
  t.ours_enc = detail::vision_estimate(sc.chain, obs, encoders, encoders, truth, cfg);
  return t;
}

struct StateBenchmark {
  std::uint64_t seed = 0;
  std::vector<StateTrial> trials;
  MethodSummary encoder_only;
  MethodSummary ours_no_enc;
  MethodSummary ours_enc;

  /// Median end-effector translation error of ours-enc relative to encoder-only.
  double enc_ratio() const {
    return encoder_only.translation.median > 0.0 ? ours_enc.translation.median / encoder_only.translation.median : 0.0;
  }
};

inline StateBenchmark benchmark_state(const Scenario& sc, const SolverConfig& cfg, const StateBenchmarkOptions& opt) {
  if (opt.trials == 0) throw Error(ErrorKind::Validation, "benchmark needs at least one trial");
  StateBenchmark b;
  b.seed = opt.seed;
  b.trials = run_trials<StateTrial>(opt.trials, opt.threads, [&](std::size_t i) {
    return run_state_trial(sc, cfg, derive_seed(opt.seed, i), opt.occlusion);
  });
  std::vector<MethodOutcome> enc, no_enc, ours;
  for (const StateTrial& t : b.trials) {
    enc.push_back(t.encoder_only);
    no_enc.push_back(t.ours_no_enc);
    ours.push_back(t.ours_enc);
  }
  b.encoder_only = summarize("encoder-only", enc);
  b.ours_no_enc = summarize("ours-no-enc", no_enc);
  b.ours_enc = summarize("ours-enc", ours);
  return b;
}

/// Link indices masked at each occlusion level: links 1..d-1 are masked from
/// the middle of the chain outwards; the end-effector link stays visible.
/// Levels: 0, 1, 3, 4 masked markers and the end-effector-only case.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> occlusion_sweep_levels(std::size_t dof) {
  std::vector<std::size_t> order;
  for (std::size_t j = 1; j + 1 <= dof; ++j) order.push_back(j);
  const double mid = static_cast<double>(dof) / 2.0;
  std::stable_sort(order.begin(), order.end(), [mid](std::size_t a, std::size_t b) {
    return std::abs(static_cast<double>(a) - mid) < std::abs(static_cast<double>(b) - mid);
  });
  std::vector<std::pair<std::string, std::vector<std::size_t>>> levels;
  for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4}}) {
    if (k > order.size()) break;
    levels.emplace_back(std::to_string(k) + "-occluded", std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)));
  }
  if (order.size() > 4) levels.emplace_back("end-effector-only", order);
  return levels;
}

inline std::vector<bool> occlusion_mask(std::size_t dof, const std::vector<std::size_t>& masked_links) {
  std::vector<bool> mask(dof + 1, false);
  for (std::size_t j : masked_links) mask.at(j) = true;
  return mask;
}

inline Json report_header(const std::string& kind, std::uint64_t seed, const SolverConfig& cfg) {
  return Json{{"kind", kind}, {"tool_version", kVersion}, {"seed", seed}, {"config_hash", cfg.hash()}, {"solver_config", cfg.to_json()}};
}

inline Json state_benchmark_to_json(const StateBenchmark& b, const SolverConfig& cfg) {
  Json doc = report_header("benchmark-state", b.seed, cfg);
  doc["trials"] = b.trials.size();
  doc["methods"] = Json::array({b.encoder_only.to_json(), b.ours_no_enc.to_json(), b.ours_enc.to_json()});
  doc["ours_enc_to_encoder_ratio"] = b.enc_ratio();
  return doc;
}

// ---------------------------------------------------------------------------
// Control

struct ControlBenchmark {
  std::uint64_t seed = 0;
  std::vector<JointVector> targets;
  EpisodeReport naive;
  EpisodeReport no_delta;
  EpisodeReport delta;

  /// delta <= no-delta < naive on median end-effector translation error.
  bool ordering_holds() const {
    return delta.translation.median <= no_delta.translation.median &&
           no_delta.translation.median < naive.translation.median;
  }

  double full_reduction() const {
    return naive.translation.median > 0.0 ? 1.0 - delta.translation.median / naive.translation.median : 0.0;
  }
};

inline std::vector<JointVector> random_targets(const KinematicChain& chain, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 7));
  std::vector<JointVector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_configuration(chain, rng));
  return out;
}

/// The same targets run in each mode on identically seeded robots.
inline ControlBenchmark benchmark_control(const Scenario& sc, const SolverConfig& cfg, std::size_t n_targets,
                                          std::uint64_t seed, int delta_iterations = 1) {
  if (n_targets == 0) throw Error(ErrorKind::Validation, "benchmark needs at least one target");
  ControlBenchmark b;
  b.seed = seed;
  b.targets = random_targets(sc.chain, n_targets, seed);
  const std::uint64_t robot_seed = derive_seed(seed, 11);
  auto run = [&](ControlMode mode) {
    SimulatedRobot robot = sc.make_robot(robot_seed);
    return run_episode(robot, b.targets, cfg, mode, delta_iterations);
  };
  b.naive = run(ControlMode::Naive);
  b.no_delta = run(ControlMode::CalibrateOnly);
  b.delta = run(ControlMode::Full);
  return b;
}

inline MethodSummary summarize_episode(const std::string& name, const EpisodeReport& ep) {
  std::vector<MethodOutcome> outcomes;
  for (const ControlStepReport& s : ep.steps) {
    const auto reached = s.refined_reached ? s.refined_reached : s.naive_reached;
    if (!reached) continue;
    MethodOutcome o;
    o.end_effector = reached->error;
    o.joint_error = reached->theta - s.target;
    o.failed = !s.errors.empty();
    outcomes.push_back(std::move(o));
  }
  return summarize(name, outcomes);
}

inline Json control_benchmark_to_json(const ControlBenchmark& b, const SolverConfig& cfg, bool include_steps) {
  Json doc = report_header("benchmark-control", b.seed, cfg);
  doc["targets"] = b.targets.size();
  doc["methods"] = Json::array({summarize_episode("delta", b.delta).to_json(),
                                summarize_episode("no-delta", b.no_delta).to_json(),
                                summarize_episode("naive", b.naive).to_json()});
  doc["ordering_holds"] = b.ordering_holds();
  doc["full_vs_naive_reduction"] = b.full_reduction();
  if (include_steps) {
    doc["episodes"] = Json{{"delta", episode_to_json(b.delta)},
                           {"no_delta", episode_to_json(b.no_delta)},
                           {"naive", episode_to_json(b.naive)}};
  }
  return doc;
}

}  // namespace fidex

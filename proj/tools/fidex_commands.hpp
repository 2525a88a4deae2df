#pragma once

// Subcommand implementations for the fidex tool. Each returns a process exit
// code; reports go to stdout / --out, diagnostics to the `err` stream.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fidex/benchmark.hpp"
#include "fidex/control.hpp"
#include "fidex/error.hpp"
#include "fidex/estimator.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"
#include "fidex/observation.hpp"
#include "fidex/simulator.hpp"
#include "fidex/version.hpp"

namespace fidex::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInvalidInput = 2,
  kUnobservable = 3,
  kNotConverged = 4,
  kNumericalFailure = 5,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::UnknownMarker:
      return kInvalidInput;
    case ErrorKind::BaseUnobserved:
    case ErrorKind::Unobservable:
      return kUnobservable;
    case ErrorKind::NotConverged:
      return kNotConverged;
    case ErrorKind::BranchAmbiguity:
    case ErrorKind::NumericalFailure:
      return kNumericalFailure;
  }
  return kUsage;
}

struct Options {
  std::string chain;
  std::string registry;
  std::string detections;
  std::string encoders;
  std::string scenario;
  std::string out;
  std::string frames_dir;
  std::string init = "auto";  // zeros | encoders | auto
  std::uint64_t seed = 0;
  std::size_t trials = 200;
  std::size_t targets = 50;
  std::size_t seed_count = 1;
  unsigned threads = 1;
  int delta_iterations = 1;
  std::optional<double> rot_weight;
  bool compare_init = false;
  bool occlusion_sweep = false;
  bool include_steps = false;
};

// Encoder readings file: {"encoders": [rad, ...]}.
inline JointVector encoders_from_json(const Json& doc, std::size_t dof) {
  return as_fixed_vector(require_field(doc, "encoders", ""), dof, "encoders");
}

inline JointVector load_encoders_file(const std::string& path, std::size_t dof) {
  try {
    return encoders_from_json(read_json_file(path), dof);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) throw;
    throw Error(e.kind(), path + ": " + e.what());
  }
}

// Bad flag combinations; exit code 1 like command-line parse errors.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

inline SolverConfig solver_config(const Options& o, const Scenario* sc = nullptr) {
  SolverConfig cfg;
  if (sc && sc->rot_weight) cfg.rot_weight = *sc->rot_weight;
  if (o.rot_weight) cfg.rot_weight = *o.rot_weight;
  cfg.validate();
  return cfg;
}

inline void emit(const Options& o, const Json& doc, std::ostream& out, const std::string& table) {
  if (o.out.empty()) {
    out << doc.dump(2) << "\n";
    return;
  }
  write_text_file(o.out, doc.dump(2) + "\n");
  out << table;
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

inline std::string joints_line(const JointVector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s;
}

inline Json estimate_header(const SolverConfig& cfg) {
  return Json{{"kind", "estimate"}, {"tool_version", kVersion}, {"config_hash", cfg.hash()}, {"solver_config", cfg.to_json()}};
}

inline std::string method_rows(const std::vector<MethodSummary>& methods) {
  std::ostringstream t;
  t << std::left << std::setw(16) << "method" << std::right << std::setw(12) << "trans med" << std::setw(12)
    << "trans p90" << std::setw(12) << "rot med" << std::setw(12) << "rot p90" << std::setw(10) << "failed"
    << std::setw(10) << "flagged" << "\n";
  for (const MethodSummary& m : methods) {
    t << std::left << std::setw(16) << m.method << std::right << std::setw(12) << fmt(m.translation.median * 1000.0, 2)
      << std::setw(12) << fmt(m.translation.p90 * 1000.0, 2) << std::setw(12) << fmt(m.rotation.median)
      << std::setw(12) << fmt(m.rotation.p90) << std::setw(10) << m.failures << std::setw(10) << m.flagged << "\n";
  }
  return t.str();
}

}  // namespace detail

/// estimate: joint state, extrinsics and (with --encoders) calibration.
inline int cmd_estimate(const Options& o, std::ostream& out, std::ostream& err) {
  detail::require(o.chain, "--chain");
  detail::require(o.registry, "--registry");
  detail::require(o.detections, "--detections");
  const KinematicChain chain = load_chain_file(o.chain);
  const ExoskeletonRegistry reg = load_registry_file(o.registry, chain);
  const DetectionFrame frame = load_detections_file(o.detections);
  std::optional<JointVector> encoders;
  if (!o.encoders.empty()) encoders = load_encoders_file(o.encoders, chain.dof());
  const SolverConfig cfg = detail::solver_config(o);

  if (o.init != "zeros" && o.init != "encoders" && o.init != "auto") {
    throw UsageError("--init must be zeros, encoders or auto");
  }
  if (o.init == "encoders" && !encoders) throw UsageError("--init encoders needs --encoders");
  const InitPolicy policy = (o.init == "zeros" || !encoders) ? InitPolicy::Zeros : InitPolicy::Encoders;

  Json doc = detail::estimate_header(cfg);
  doc["frame_id"] = frame.frame_id;
  std::ostringstream table;
  bool converged = true;
  auto run = [&](InitPolicy p, const char* label) {
    const EstimateReport r = estimate_frame(chain, reg, frame.detections, encoders, cfg, p);
    Json rep = estimate_report_to_json(r, chain);
    rep["init"] = p == InitPolicy::Encoders ? "encoders" : "zeros";
    converged = converged && r.converged;
    table << label << " (init " << rep["init"].get<std::string>() << "): " << (r.converged ? "converged" : "NOT converged")
          << ", " << r.iterations << " iterations, cost " << r.final_cost << (r.degenerate_risk ? ", degenerate risk" : "")
          << "\n  theta* " << detail::joints_line(r.theta_star) << "\n";
    if (r.calibration_offset) table << "  dtheta " << detail::joints_line(*r.calibration_offset) << "\n";
    return rep;
  };
  if (o.compare_init) {
    if (!encoders) throw UsageError("--compare-init needs --encoders");
    doc["reports"] = Json::array({run(InitPolicy::Zeros, "zeros"), run(InitPolicy::Encoders, "encoders")});
  } else {
    doc["report"] = run(policy, "estimate");
  }
  detail::emit(o, doc, out, table.str());
  if (!converged) {
    err << "fidex: solver did not converge (see stop_reason in the report)\n";
    return kNotConverged;
  }
  return kOk;
}

/// extrinsics: camera pose in the robot frame from the base marker.
inline int cmd_extrinsics(const Options& o, std::ostream& out, std::ostream&) {
  detail::require(o.chain, "--chain");
  detail::require(o.registry, "--registry");
  detail::require(o.detections, "--detections");
  const KinematicChain chain = load_chain_file(o.chain);
  const ExoskeletonRegistry reg = load_registry_file(o.registry, chain);
  const DetectionFrame frame = load_detections_file(o.detections);
  const ObservationSet obs = build_observation_set(frame.detections, reg);
  const RigidTransform cam = recover_camera_pose(obs, reg);
  const Json doc{{"kind", "extrinsics"},
                 {"tool_version", kVersion},
                 {"frame_id", frame.frame_id},
                 {"camera_pose", to_json(cam)}};
  detail::emit(o, doc, out,
               "camera in robot frame: t = [" + detail::joints_line(cam.translation) + "] m, rotation angle " +
                   detail::fmt(cam.rotation.angle()) + " rad\n");
  return kOk;
}

/// calibrate: encoder offsets dtheta = theta* - theta_enc from one frame.
inline int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err) {
  detail::require(o.chain, "--chain");
  detail::require(o.registry, "--registry");
  detail::require(o.detections, "--detections");
  detail::require(o.encoders, "--encoders");
  const KinematicChain chain = load_chain_file(o.chain);
  const ExoskeletonRegistry reg = load_registry_file(o.registry, chain);
  const DetectionFrame frame = load_detections_file(o.detections);
  const JointVector encoders = load_encoders_file(o.encoders, chain.dof());
  const SolverConfig cfg = detail::solver_config(o);
  const InitPolicy policy = o.init == "zeros" ? InitPolicy::Zeros : InitPolicy::Encoders;
  const EstimateReport r = estimate_frame(chain, reg, frame.detections, encoders, cfg, policy);
  const Json doc{{"kind", "calibrate"},
                 {"tool_version", kVersion},
                 {"config_hash", cfg.hash()},
                 {"frame_id", frame.frame_id},
                 {"converged", r.converged},
                 {"theta_star", to_json(r.theta_star)},
                 {"encoder_readings", to_json(encoders)},
                 {"calibration_offset", to_json(*r.calibration_offset)}};
  detail::emit(o, doc, out, "dtheta " + detail::joints_line(*r.calibration_offset) + "\n");
  if (!r.converged) {
    err << "fidex: solver did not converge; offsets are from the last iterate\n";
    return kNotConverged;
  }
  return kOk;
}

/// simulate: run the scenario episode with raw commands and record every frame.
inline int cmd_simulate(const Options& o, std::ostream& out, std::ostream&) {
  detail::require(o.scenario, "--scenario");
  const Json scenario_doc = read_json_file(o.scenario);
  const Scenario sc = scenario_from_json(scenario_doc, std::filesystem::path(o.scenario).parent_path());
  SimulatedRobot robot = sc.make_robot(o.seed);
  std::vector<JointVector> targets = sc.episode;
  if (targets.empty()) targets.push_back(robot.read_encoders());

  if (!o.frames_dir.empty()) std::filesystem::create_directories(o.frames_dir);
  Json frames = Json::array();
  std::ostringstream table;
  for (std::size_t step = 0; step < targets.size(); ++step) {
    if (auto mask = sc.occlusion_at(step)) robot.set_occlusion(*mask);
    const bool clamped = robot.command(targets[step]);
    const DetectionFrame frame = robot.acquire_detections();
    const JointVector enc = robot.read_encoders();
    Json f{{"step", step},
           {"command", to_json(targets[step])},
           {"clamped", clamped},
           {"true_theta", to_json(robot.true_theta())},
           {"encoders", to_json(enc)},
           {"detections", detections_to_json(frame)}};
    if (!o.frames_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%03zu", step);
      const std::filesystem::path base = std::filesystem::path(o.frames_dir) / name;
      write_text_file(base.string() + ".detections.json", detections_to_json(frame).dump(2) + "\n");
      write_text_file(base.string() + ".encoders.json", Json{{"encoders", to_json(enc)}}.dump(2) + "\n");
      write_text_file(base.string() + ".truth.json", Json{{"theta", to_json(robot.true_theta())}}.dump(2) + "\n");
    }
    table << "step " << step << ": " << frame.detections.size() << " detections, true theta "
          << detail::joints_line(robot.true_theta()) << "\n";
    frames.push_back(std::move(f));
  }
  Json doc{{"kind", "simulate"},
           {"tool_version", kVersion},
           {"seed", o.seed},
           {"config_hash", fnv1a_hex(scenario_doc.dump())},
           {"encoder_offset", to_json(robot.noise().encoder_offset)},
           {"camera_pose", to_json(sc.camera_pose)},
           {"frames", std::move(frames)}};
  detail::emit(o, doc, out, table.str());
  return kOk;
}

/// benchmark-state: encoder-only vs vision estimation, optionally per occlusion level.
inline int cmd_benchmark_state(const Options& o, std::ostream& out, std::ostream&) {
  detail::require(o.scenario, "--scenario");
  const Scenario sc = load_scenario_file(o.scenario);
  const SolverConfig cfg = detail::solver_config(o, &sc);
  StateBenchmarkOptions opt;
  opt.trials = o.trials;
  opt.seed = o.seed;
  opt.threads = o.threads;

  std::ostringstream table;
  Json doc;
  if (!o.occlusion_sweep) {
    const StateBenchmark b = benchmark_state(sc, cfg, opt);
    doc = state_benchmark_to_json(b, cfg);
    table << "state estimation, " << b.trials.size() << " trials, seed " << o.seed << " (errors: mm / rad)\n"
          << detail::method_rows({b.encoder_only, b.ours_no_enc, b.ours_enc})
          << "ours-enc / encoder-only median translation: " << detail::fmt(b.enc_ratio(), 3) << "\n";
  } else {
    doc = report_header("benchmark-state-occlusion", o.seed, cfg);
    doc["trials"] = o.trials;
    Json levels = Json::array();
    for (const auto& [label, masked] : occlusion_sweep_levels(sc.chain.dof())) {
      opt.occlusion = occlusion_mask(sc.chain.dof(), masked);
      const StateBenchmark b = benchmark_state(sc, cfg, opt);
      Json level = state_benchmark_to_json(b, cfg);
      Json masked_names = Json::array();
      for (std::size_t j : masked) masked_names.push_back(sc.chain.link_names()[j]);
      levels.push_back(Json{{"level", label}, {"masked_links", masked_names}, {"methods", level["methods"]}});
      table << label << "\n" << detail::method_rows({b.encoder_only, b.ours_no_enc, b.ours_enc});
    }
    doc["levels"] = std::move(levels);
  }
  detail::emit(o, doc, out, table.str());
  return kOk;
}

/// benchmark-control: naive / no-delta / delta episodes over random targets.
inline int cmd_benchmark_control(const Options& o, std::ostream& out, std::ostream&) {
  detail::require(o.scenario, "--scenario");
  if (o.seed_count == 0) throw UsageError("--seed-count must be >= 1");
  const Scenario sc = load_scenario_file(o.scenario);
  const SolverConfig cfg = detail::solver_config(o, &sc);

  std::vector<ControlBenchmark> runs = run_trials<ControlBenchmark>(o.seed_count, o.threads, [&](std::size_t i) {
    return benchmark_control(sc, cfg, o.targets, o.seed + i, o.delta_iterations);
  });
  Json doc = report_header("benchmark-control", o.seed, cfg);
  doc["targets"] = o.targets;
  doc["delta_iterations"] = o.delta_iterations;
  Json per_seed = Json::array();
  std::ostringstream table;
  for (const ControlBenchmark& b : runs) {
    per_seed.push_back(control_benchmark_to_json(b, cfg, o.include_steps));
    table << "seed " << b.seed << ", " << b.targets.size() << " targets (errors: mm / rad)\n"
          << detail::method_rows({summarize_episode("delta", b.delta), summarize_episode("no-delta", b.no_delta),
                                  summarize_episode("naive", b.naive)})
          << "ordering delta <= no-delta < naive: " << (b.ordering_holds() ? "yes" : "no")
          << ", full vs naive reduction " << detail::fmt(100.0 * b.full_reduction(), 1) << "%\n";
  }
  doc["runs"] = std::move(per_seed);
  detail::emit(o, doc, out, table.str());
  return kOk;
}

/// validate: schema-check whichever input files are given.
inline int cmd_validate(const Options& o, std::ostream& out, std::ostream&) {
  if (o.chain.empty() && o.detections.empty() && o.scenario.empty() && o.encoders.empty() && o.registry.empty()) {
    throw UsageError("nothing to validate; pass --chain, --registry, --detections, --encoders or --scenario");
  }
  std::optional<KinematicChain> chain;
  if (!o.chain.empty()) {
    chain = load_chain_file(o.chain);
    out << "ok chain " << o.chain << " (" << chain->dof() << " joints)\n";
  }
  if (!o.registry.empty()) {
    if (!chain) throw UsageError("--registry is checked against a chain; pass --chain");
    const ExoskeletonRegistry reg = load_registry_file(o.registry, *chain);
    out << "ok registry " << o.registry << " (" << reg.entries().size() << " markers)\n";
  }
  if (!o.detections.empty()) {
    const DetectionFrame f = load_detections_file(o.detections);
    out << "ok detections " << o.detections << " (" << f.detections.size() << " detections)\n";
  }
  if (!o.encoders.empty()) {
    if (!chain) throw UsageError("--encoders is checked against a chain; pass --chain");
    load_encoders_file(o.encoders, chain->dof());
    out << "ok encoders " << o.encoders << "\n";
  }
  if (!o.scenario.empty()) {
    const Scenario sc = load_scenario_file(o.scenario);
    out << "ok scenario " << o.scenario << " (" << sc.episode.size() << " episode targets)\n";
  }
  return kOk;
}

/// Runs `fn`, mapping library errors to exit codes with one stderr line.
template <typename Fn>
int guarded(Fn fn, std::ostream& err) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "fidex: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const UsageError& e) {
    err << "fidex: usage: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "fidex: internal error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace fidex::cli

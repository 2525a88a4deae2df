#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fidex_commands.hpp"

using fidex::cli::Options;

namespace {

void add_files(CLI::App* sub, Options& o) {
  sub->add_option("--chain", o.chain, "kinematic chain file");
  sub->add_option("--registry", o.registry, "marker registry file");
  sub->add_option("--detections", o.detections, "detections file (one frame)");
  sub->add_option("--encoders", o.encoders, "encoder readings file {\"encoders\": [...]}");
}

void add_solver(CLI::App* sub, Options& o) {
  sub->add_option("--rot-weight", o.rot_weight, "rotation weight of the pose distance (m/rad)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fidex: joint state, camera extrinsics and encoder offsets from per-link marker poses"};
  app.set_version_flag("--version", std::string(fidex::kVersion));
  app.require_subcommand(1);
  Options o;

  auto* estimate = app.add_subcommand("estimate", "recover joint angles (and extrinsics, offsets) from one frame");
  add_files(estimate, o);
  add_solver(estimate, o);
  estimate->add_option("--init", o.init, "initialization: zeros, encoders or auto")
      ->check(CLI::IsMember({"zeros", "encoders", "auto"}));
  estimate->add_flag_callback("--init-from-encoders", [&o] { o.init = "encoders"; }, "same as --init encoders");
  estimate->add_flag("--compare-init", o.compare_init, "emit reports for zero and encoder initialization");
  estimate->add_option("--out", o.out, "write the report here (default: report to stdout)");

  auto* extrinsics = app.add_subcommand("extrinsics", "camera pose in the robot frame from the base marker");
  add_files(extrinsics, o);
  extrinsics->add_option("--out", o.out, "write the report here");

  auto* calibrate = app.add_subcommand("calibrate", "encoder calibration offsets from one frame");
  add_files(calibrate, o);
  add_solver(calibrate, o);
  calibrate->add_option("--init", o.init, "initialization: zeros or encoders")
      ->check(CLI::IsMember({"zeros", "encoders", "auto"}));
  calibrate->add_option("--out", o.out, "write the report here");

  auto* simulate = app.add_subcommand("simulate", "run a scenario episode and record detections");
  simulate->add_option("--scenario", o.scenario, "scenario file")->required();
  simulate->add_option("--seed", o.seed, "random seed");
  simulate->add_option("--frames-dir", o.frames_dir, "also write per-frame detections/encoders files here");
  simulate->add_option("--out", o.out, "write the report here");

  auto* bench_state = app.add_subcommand("benchmark-state", "encoder-only vs vision state estimation");
  bench_state->add_option("--scenario", o.scenario, "scenario file")->required();
  bench_state->add_option("--seed", o.seed, "random seed");
  bench_state->add_option("--trials", o.trials, "number of trials")->check(CLI::PositiveNumber);
  bench_state->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  bench_state->add_flag("--occlusion-sweep", o.occlusion_sweep, "repeat with 0, 1, 3, 4 markers masked and end-effector only");
  bench_state->add_option("--out", o.out, "write the report here");
  add_solver(bench_state, o);

  auto* bench_control = app.add_subcommand("benchmark-control", "naive vs calibrated vs delta-refined control");
  bench_control->add_option("--scenario", o.scenario, "scenario file")->required();
  bench_control->add_option("--seed", o.seed, "first random seed");
  bench_control->add_option("--seed-count", o.seed_count, "number of consecutive seeds")->check(CLI::PositiveNumber);
  bench_control->add_option("--targets", o.targets, "targets per episode")->check(CLI::PositiveNumber);
  bench_control->add_option("--delta-iterations", o.delta_iterations, "delta moves per target")->check(CLI::PositiveNumber);
  bench_control->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  bench_control->add_flag("--include-steps", o.include_steps, "embed every control step in the report");
  bench_control->add_option("--out", o.out, "write the report here");
  add_solver(bench_control, o);

  auto* validate = app.add_subcommand("validate", "schema-check input files");
  add_files(validate, o);
  validate->add_option("--scenario", o.scenario, "scenario file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fidex::cli::kUsage;
  }

  using namespace fidex::cli;
  return guarded(
      [&] {
        if (*estimate) return cmd_estimate(o, std::cout, std::cerr);
        if (*extrinsics) return cmd_extrinsics(o, std::cout, std::cerr);
        if (*calibrate) return cmd_calibrate(o, std::cout, std::cerr);
        if (*simulate) return cmd_simulate(o, std::cout, std::cerr);
        if (*bench_state) return cmd_benchmark_state(o, std::cout, std::cerr);
        if (*bench_control) return cmd_benchmark_control(o, std::cout, std::cerr);
        return cmd_validate(o, std::cout, std::cerr);
      },
      std::cerr);
}

// Simulates one frame of the bundled arm on the low-cost noise profile and
// recovers joint angles, camera pose and encoder offsets from it.

#include <iostream>

#include "fidex/estimator.hpp"
#include "fidex/simulator.hpp"

int main(int argc, char** argv) {
  const std::string scenario_path = argc > 1 ? argv[1] : FIDEX_DATA_DIR "/scenarios/low_cost.json";
  try {
    const fidex::Scenario sc = fidex::load_scenario_file(scenario_path);
    fidex::SimulatedRobot robot = sc.make_robot(42);

    fidex::JointVector target(6);
    target << 0.4, -0.6, 0.9, 0.3, -1.0, 0.5;
    robot.command(target);

    const fidex::JointVector encoders = robot.read_encoders();
    const fidex::DetectionFrame frame = robot.acquire_detections();

    fidex::SolverConfig cfg;
    if (sc.rot_weight) cfg.rot_weight = *sc.rot_weight;
    const fidex::EstimateReport r =
        fidex::estimate_frame(robot.chain(), robot.registry(), frame.detections, encoders, cfg, fidex::InitPolicy::Encoders);

    const Eigen::IOFormat row(4, 0, " ", " ", "", "", "[", "]");
    std::cout << "true theta  " << robot.true_theta().transpose().format(row) << "\n"
              << "encoders    " << encoders.transpose().format(row) << "\n"
              << "estimate    " << r.theta_star.transpose().format(row) << "\n"
              << "offset      " << r.calibration_offset->transpose().format(row) << "\n"
              << "iterations  " << r.iterations << (r.converged ? " (converged)" : " (not converged)") << "\n";

    const fidex::PoseError enc = fidex::pose_error(fidex::forward_kinematics(robot.chain(), encoders).back(),
                                                   robot.end_effector_pose());
    const fidex::PoseError est = fidex::pose_error(fidex::forward_kinematics(robot.chain(), r.theta_star).back(),
                                                   robot.end_effector_pose());
    std::cout << "end-effector error, encoders only: " << enc.translation * 1000.0 << " mm\n"
              << "end-effector error, estimate:      " << est.translation * 1000.0 << " mm\n"
              << "camera error: " << fidex::pose_error(*r.camera_pose, sc.camera_pose).translation * 1000.0 << " mm\n";
  } catch (const fidex::Error& e) {
    std::cerr << "estimate_from_simulation: " << e.what() << "\n";
    return 1;
  }
}

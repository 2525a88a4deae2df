#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fidex/estimator.hpp"
#include "fidex/observation.hpp"
#include "fidex/simulator.hpp"
#include "oracles.hpp"

using namespace fidex;
constexpr double kPi = std::numbers::pi;

namespace {

const KinematicChain& bundled_chain() {
  static const KinematicChain chain = load_chain_file(FIDEX_DATA_DIR "/so100_like_chain.json");
  return chain;
}

const ExoskeletonRegistry& bundled_registry() {
  static const ExoskeletonRegistry reg = load_registry_file(FIDEX_DATA_DIR "/so100_like_registry.json", bundled_chain());
  return reg;
}

KinematicChain one_joint() {
  JointSpec j;
  j.name = "j";
  j.child_link = "tip";
  return KinematicChain("one", "base", {j});
}

ExoskeletonRegistry identity_registry(const KinematicChain& chain) {
  return ExoskeletonRegistry({{"base", 0, 0, {}, {}}, {"tip", 0, 1, {}, {}}}, chain);
}

SimulatedRobot noiseless_robot(const RigidTransform& camera, const JointVector& theta) {
  SimulatedRobot robot(bundled_chain(), bundled_registry(), NoiseModel::none(6), camera);
  robot.command(theta);
  return robot;
}

}  // namespace

TEST(LinkPoseFromMarker, IdentityRegistryReturnsDetection) {
  const KinematicChain chain = one_joint();
  const ExoskeletonRegistry reg = identity_registry(chain);
  std::mt19937_64 rng(1);
  const RigidTransform det = oracle::random_transform(rng);
  const RigidTransform out = link_pose_from_marker({1, det, 1.0}, reg);
  EXPECT_LT((out.matrix() - det.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LinkPoseFromMarker, HandEvaluatedProduct) {
  const KinematicChain chain = one_joint();
  const ExoskeletonRegistry reg(
      {{"tip", 0, 5, RigidTransform::from_translation(0, 0, -0.02), RigidTransform::from_rotation(rot_x(kPi))}}, chain);
  const RigidTransform out = link_pose_from_marker({5, RigidTransform::identity(), 1.0}, reg);
  const oracle::Mat4 expected =
      oracle::translation(0, 0, -0.02) * oracle::homogeneous(oracle::rodrigues(oracle::Vec3::UnitX(), kPi), oracle::Vec3::Zero());
  EXPECT_LT((oracle::matrix_of(out) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinkPoseFromMarker, UnknownMarker) {
  const KinematicChain chain = one_joint();
  try {
    (void)link_pose_from_marker({99, {}, 1.0}, identity_registry(chain));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownMarker);
  }
}

TEST(LinkPoseFromMarker, EquivariantUnderPremultiplication) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const MarkerDetection det{3, oracle::random_transform(rng), 1.0};
    const RigidTransform g = oracle::random_transform(rng, 2.0);
    const RigidTransform a = compose(g, link_pose_from_marker(det, bundled_registry()));
    const RigidTransform b = link_pose_from_marker({3, compose(g, det.camera_to_marker), 1.0}, bundled_registry());
    EXPECT_LT((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Registry, Validation) {
  const KinematicChain chain = one_joint();
  EXPECT_THROW(ExoskeletonRegistry({{"nowhere", 0, 1, {}, {}}}, chain), Error);
  EXPECT_THROW(ExoskeletonRegistry({{"base", 0, 1, {}, {}}, {"tip", 0, 1, {}, {}}}, chain), Error);
  const ExoskeletonRegistry ok = identity_registry(chain);
  EXPECT_TRUE(ok.has_base());
  EXPECT_EQ(ok.find(1)->link_index, 1u);
}

TEST(Registry, BundledFileRoundTrips) {
  const ExoskeletonRegistry& reg = bundled_registry();
  EXPECT_EQ(reg.entries().size(), 7u);
  const ExoskeletonRegistry again = registry_from_json(registry_to_json(reg), bundled_chain());
  EXPECT_EQ(registry_to_json(again).dump(), registry_to_json(reg).dump());
}

TEST(BuildObservationSet, EmptyDetections) {
  const ObservationSet obs = build_observation_set({}, bundled_registry());
  EXPECT_EQ(obs.links.size(), 6u);
  EXPECT_EQ(obs.visible_count(), 0u);
  EXPECT_FALSE(obs.base_in_camera.has_value());
}

TEST(BuildObservationSet, BaseOnly) {
  const MarkerDetection base{0, RigidTransform::from_translation(0, 0, 1), 1.0};
  const ObservationSet obs = build_observation_set({base}, bundled_registry());
  EXPECT_EQ(obs.visible_count(), 0u);
  ASSERT_TRUE(obs.base_in_camera.has_value());
}

TEST(BuildObservationSet, LinksWithoutBaseAreRejected) {
  try {
    (void)build_observation_set({{3, RigidTransform::identity(), 1.0}}, bundled_registry());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BaseUnobserved);
  }
}

TEST(BuildObservationSet, NoiselessSimulatorRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const JointVector theta = oracle::random_theta(bundled_chain(), rng);
    const RigidTransform camera = oracle::random_transform(rng, 1.0);
    SimulatedRobot robot = noiseless_robot(camera, theta);
    const ObservationSet obs = build_observation_set(robot.simulate_detections(), bundled_registry());
    ASSERT_EQ(obs.visible_count(), 6u);
    const auto fk = oracle::forward_kinematics(bundled_chain(), robot.true_theta());
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_LT((oracle::matrix_of(obs.links[j].pose) - fk[j]).cwiseAbs().maxCoeff(), 1e-9);
    }
    EXPECT_LT((oracle::matrix_of(inverse(*obs.base_in_camera)) - oracle::matrix_of(camera)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BuildObservationSet, MostConfidentDuplicateWins) {
  const KinematicChain chain = one_joint();
  const ExoskeletonRegistry reg({{"base", 0, 0, {}, {}}, {"tip", 0, 1, {}, {}}, {"tip", 0, 2, {}, {}}}, chain);
  const MarkerDetection base{0, RigidTransform::identity(), 1.0};
  const MarkerDetection low{1, RigidTransform::from_translation(1, 0, 0), 0.4};
  const MarkerDetection high{2, RigidTransform::from_translation(2, 0, 0), 0.9};
  const ObservationSet obs = build_observation_set({base, low, high}, reg);
  EXPECT_EQ(obs.links[0].marker_id, 2);
  EXPECT_NEAR(obs.links[0].pose.translation.x(), 2.0, 1e-15);
}

TEST(BuildObservationSet, ConfidenceGateAndUnknownIds) {
  const KinematicChain chain = one_joint();
  const ExoskeletonRegistry reg = identity_registry(chain);
  const MarkerDetection base{0, RigidTransform::identity(), 1.0};
  EXPECT_EQ(build_observation_set({base, {1, {}, 0.2}}, reg, 0.5).visible_count(), 0u);
  EXPECT_EQ(build_observation_set({base, {1, {}, 0.2}}, reg, 0.0).visible_count(), 1u);
  EXPECT_EQ(build_observation_set({base, {77, {}, 1.0}}, reg).visible_count(), 0u);
}

TEST(DetectionsDocument, RoundTripAndValidation) {
  const char* text = R"({"frame_id": 12, "detections": [
      {"marker_id": 0, "translation": [0, 0, 1], "quaternion": [1, 0, 0, 0], "confidence": 0.8}]})";
  const DetectionFrame frame = detections_from_json(parse_json_text(text));
  EXPECT_EQ(frame.frame_id, "12");
  ASSERT_EQ(frame.detections.size(), 1u);
  EXPECT_DOUBLE_EQ(frame.detections[0].confidence, 0.8);
  const DetectionFrame again = detections_from_json(detections_to_json(frame));
  EXPECT_EQ(detections_to_json(again).dump(), detections_to_json(frame).dump());

  const char* bad_conf = R"({"frame_id": "a", "detections": [
      {"marker_id": 0, "translation": [0, 0, 1], "quaternion": [1, 0, 0, 0], "confidence": 1.5}]})";
  EXPECT_THROW(detections_from_json(parse_json_text(bad_conf)), Error);
  const char* bad_quat = R"({"frame_id": "a", "detections": [
      {"marker_id": 0, "translation": [0, 0, 1], "quaternion": [2, 0, 0, 0]}]})";
  EXPECT_THROW(detections_from_json(parse_json_text(bad_quat)), Error);
}

TEST(RecoverCameraPose, IdentityFixture) {
  const KinematicChain chain = one_joint();
  const ObservationSet obs = build_observation_set({{0, RigidTransform::identity(), 1.0}}, identity_registry(chain));
  const RigidTransform cam = recover_camera_pose(obs, identity_registry(chain));
  EXPECT_LT((cam.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RecoverCameraPose, HandPickedTransforms) {
  const KinematicChain chain = one_joint();
  const RigidTransform marker_exo{rot_x(0.3), Vec3(0.01, 0.0, -0.02)};
  const RigidTransform exo_robot{rot_z(-0.5), Vec3(0.0, 0.05, 0.0)};
  const ExoskeletonRegistry reg({{"base", 0, 0, marker_exo, exo_robot}}, chain);
  const RigidTransform cam_marker{rot_y(1.1), Vec3(0.2, -0.1, 0.9)};
  const ObservationSet obs = build_observation_set({{0, cam_marker, 1.0}}, reg);
  const oracle::Mat4 expected =
      (oracle::matrix_of(cam_marker) * oracle::matrix_of(marker_exo) * oracle::matrix_of(exo_robot)).inverse();
  EXPECT_LT((oracle::matrix_of(recover_camera_pose(obs, reg)) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RecoverCameraPose, SimulatorFrame) {
  std::mt19937_64 rng(4);
  const RigidTransform camera = oracle::random_transform(rng, 1.0);
  SimulatedRobot robot = noiseless_robot(camera, oracle::random_theta(bundled_chain(), rng));
  const ObservationSet obs = build_observation_set(robot.simulate_detections(), bundled_registry());
  EXPECT_LT((recover_camera_pose(obs, bundled_registry()).matrix() - camera.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RecoverCameraPose, EquivariantUnderDetectionTransform) {
  std::mt19937_64 rng(5);
  SimulatedRobot robot = noiseless_robot(oracle::random_transform(rng), oracle::random_theta(bundled_chain(), rng));
  std::vector<MarkerDetection> dets = robot.simulate_detections();
  const RigidTransform before = recover_camera_pose(build_observation_set(dets, bundled_registry()), bundled_registry());
  const RigidTransform g = oracle::random_transform(rng, 2.0);
  for (MarkerDetection& d : dets) d.camera_to_marker = compose(g, d.camera_to_marker);
  const RigidTransform after = recover_camera_pose(build_observation_set(dets, bundled_registry()), bundled_registry());
  EXPECT_LT((after.matrix() - compose(before, inverse(g)).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RecoverCameraPose, BaseUnobserved) {
  try {
    (void)recover_camera_pose(ObservationSet{}, bundled_registry());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BaseUnobserved);
  }
}

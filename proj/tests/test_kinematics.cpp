#include <numbers>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fidex/kinematics.hpp"
#include "oracles.hpp"

using namespace fidex;
constexpr double kPi = std::numbers::pi;

namespace {

JointSpec revolute(const std::string& name, const RigidTransform& parent, const Vec3& axis) {
  JointSpec j;
  j.name = name;
  j.child_link = name + "_link";
  j.parent_transform = parent;
  j.axis = axis;
  return j;
}

KinematicChain planar_chain() {
  // Three Z-axis joints, 0.1 m apart along X.
  return KinematicChain("planar", "base",
                        {revolute("a", RigidTransform::identity(), Vec3::UnitZ()),
                         revolute("b", RigidTransform::from_translation(0.1, 0, 0), Vec3::UnitZ()),
                         revolute("c", RigidTransform::from_translation(0.1, 0, 0), Vec3::UnitZ())});
}

const std::string kMinimalChain = R"({
  "name": "one",
  "joints": [{"name": "j", "parent_transform": {"translation": [0, 0, 0.1], "quaternion": [1, 0, 0, 0]},
              "axis": [0, 0, 1], "limits_rad": [-1, 1]}]
})";

Error load_error(const std::string& text) {
  try {
    (void)load_chain(text, "chain.json");
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "document was accepted";
  return Error(ErrorKind::Validation, "");
}

}  // namespace

TEST(ForwardKinematics, ZeroAnglesGiveParentTransformProduct) {
  std::mt19937_64 rng(1);
  const KinematicChain chain = oracle::random_chain(rng, 5);
  const auto poses = forward_kinematics(chain, JointVector::Zero(5));
  oracle::Mat4 acc = oracle::Mat4::Identity();
  for (std::size_t j = 0; j < 5; ++j) {
    acc = acc * oracle::matrix_of(chain.joint(j).parent_transform);
    EXPECT_LT((oracle::matrix_of(poses[j]) - acc).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ForwardKinematics, SingleJoint) {
  const KinematicChain chain("one", "base", {revolute("j", RigidTransform::from_translation(0, 0, 0.1), Vec3::UnitZ())});
  JointVector theta(1);
  theta << kPi / 2;
  const RigidTransform pose = forward_kinematics(chain, theta)[0];
  EXPECT_LT((oracle::matrix_of(pose) - oracle::translation(0, 0, 0.1) * oracle::rot_z(kPi / 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardKinematics, PlanarChainAgainstMatrixProduct) {
  const KinematicChain chain("planar", "base",
                             {revolute("a", RigidTransform::identity(), Vec3::UnitZ()),
                              revolute("b", RigidTransform::from_translation(0.1, 0, 0), Vec3::UnitZ())});
  JointVector theta(2);
  theta << kPi / 2, kPi / 2;
  const RigidTransform end = forward_kinematics(chain, theta)[1];
  const oracle::Mat4 expected = oracle::rot_z(kPi / 2) * oracle::translation(0.1, 0, 0) * oracle::rot_z(kPi / 2);
  EXPECT_LT((oracle::matrix_of(end) - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((end.translation - Vec3(0, 0.1, 0)).norm(), 1e-12);
}

TEST(ForwardKinematics, MatchesBruteForceOnRandomChains) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const KinematicChain chain = oracle::random_chain(rng, 1 + trial % 8);
    const JointVector theta = oracle::random_theta(chain, rng);
    const auto poses = forward_kinematics(chain, theta);
    const auto expected = oracle::forward_kinematics(chain, theta);
    for (std::size_t j = 0; j < chain.dof(); ++j) {
      EXPECT_LT((oracle::matrix_of(poses[j]) - expected[j]).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(ForwardKinematics, PrefixConsistent) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const KinematicChain chain = oracle::random_chain(rng, 6);
    const JointVector theta = oracle::random_theta(chain, rng);
    const auto poses = forward_kinematics(chain, theta);
    RigidTransform prev;
    for (std::size_t j = 0; j < chain.dof(); ++j) {
      const RigidTransform expect = compose(prev, chain.joint(j).local_transform(theta[static_cast<Eigen::Index>(j)]));
      EXPECT_EQ(poses[j].translation, expect.translation);
      EXPECT_EQ(poses[j].rotation.quaternion().coeffs(), expect.rotation.quaternion().coeffs());
      prev = poses[j];
    }
  }
}

TEST(ForwardKinematics, DefinedOutsideLimits) {
  const KinematicChain chain = planar_chain();
  JointVector theta = JointVector::Constant(3, 10.0);
  EXPECT_NO_THROW((void)forward_kinematics(chain, theta));
}

TEST(ForwardKinematics, DimensionMismatch) {
  try {
    (void)forward_kinematics(planar_chain(), JointVector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Jacobian, DownstreamColumnsAreZero) {
  std::mt19937_64 rng(4);
  const KinematicChain chain = oracle::random_chain(rng, 6);
  const JointVector theta = oracle::random_theta(chain, rng);
  for (std::size_t link = 1; link <= 6; ++link) {
    const PoseJacobian jac = link_pose_jacobian(chain, theta, link);
    for (std::size_t i = link; i < 6; ++i) EXPECT_EQ(jac.col(static_cast<Eigen::Index>(i)).norm(), 0.0);
  }
}

TEST(Jacobian, SingleZAxisJoint) {
  const KinematicChain chain("one", "base", {revolute("j", RigidTransform::identity(), Vec3::UnitZ())});
  const PoseJacobian jac = link_pose_jacobian(chain, JointVector::Zero(1), 1);
  EXPECT_LT((jac.col(0).head<3>() - Vec3::UnitZ()).norm(), 1e-15);
  EXPECT_LT(jac.col(0).tail<3>().norm(), 1e-15);
}

TEST(Jacobian, MatchesFiniteDifferencesOnRandomChains) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const KinematicChain chain = oracle::random_chain(rng, 6);
    const JointVector theta = oracle::random_theta(chain, rng);
    for (std::size_t link = 1; link <= 6; ++link) {
      const PoseJacobian jac = link_pose_jacobian(chain, theta, link);
      const auto fd = oracle::fd_body_jacobian(chain, theta, link);
      EXPECT_LT((jac - fd).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial << " link " << link;
    }
  }
}

TEST(Jacobian, LinkIndexOutOfRange) {
  const KinematicChain chain = planar_chain();
  EXPECT_THROW((void)link_pose_jacobian(chain, JointVector::Zero(3), 0), Error);
  EXPECT_THROW((void)link_pose_jacobian(chain, JointVector::Zero(3), 4), Error);
}

TEST(Chain, ValidatesInvariants) {
  EXPECT_THROW(KinematicChain("empty", "base", {}), Error);
  JointSpec bad_axis = revolute("a", {}, Vec3(0, 0, 2));
  EXPECT_THROW(KinematicChain("c", "base", {bad_axis}), Error);
  JointSpec inverted = revolute("a", {}, Vec3::UnitZ());
  inverted.lower = 1.0;
  inverted.upper = -1.0;
  EXPECT_THROW(KinematicChain("c", "base", {inverted}), Error);
  EXPECT_THROW(KinematicChain("c", "base", {revolute("a", {}, Vec3::UnitZ()), revolute("a", {}, Vec3::UnitX())}), Error);
  JointSpec prismatic = revolute("a", {}, Vec3::UnitZ());
  prismatic.type = "prismatic";
  EXPECT_THROW(KinematicChain("c", "base", {prismatic}), Error);
}

TEST(Chain, ClampAndProject) {
  JointSpec j = revolute("a", {}, Vec3::UnitZ());
  j.lower = -2.8;
  j.upper = 2.8;
  JointSpec k = revolute("b", {}, Vec3::UnitX());
  k.lower = -1.0;
  k.upper = 1.0;
  const KinematicChain chain("c", "base", {j, k});
  JointVector theta(2);
  theta << 3.5, 1.5;
  const JointVector clamped = chain.clamp(theta);
  EXPECT_DOUBLE_EQ(clamped[0], 2.8);
  EXPECT_DOUBLE_EQ(clamped[1], 1.0);
  // 3.5 rad is the same joint pose as 3.5 - 2 pi, which is inside the limits.
  const JointVector projected = chain.project(theta);
  EXPECT_NEAR(projected[0], 3.5 - 2 * kPi, 1e-12);
  EXPECT_DOUBLE_EQ(projected[1], 1.0);
  EXPECT_TRUE(chain.within_limits(projected));
}

TEST(LoadChain, MinimalDocument) {
  const KinematicChain chain = load_chain(kMinimalChain);
  EXPECT_EQ(chain.dof(), 1u);
  EXPECT_EQ(chain.link_names().size(), 2u);
  EXPECT_EQ(chain.link_names()[0], "base");
}

TEST(LoadChain, NonUnitAxisNamesTheJoint) {
  std::string doc = kMinimalChain;
  doc.replace(doc.find("[0, 0, 1]"), 9, "[0, 0, 2]");
  const Error e = load_error(doc);
  EXPECT_EQ(e.kind(), ErrorKind::Validation);
  EXPECT_NE(std::string(e.what()).find("non-unit axis"), std::string::npos);
  EXPECT_NE(std::string(e.what()).find("'j'"), std::string::npos);
}

TEST(LoadChain, MalformedJsonReportsLocation) {
  const Error e = load_error("{\n  \"name\": \"x\",\n  \"joints\": [\n}");
  EXPECT_EQ(e.kind(), ErrorKind::Parse);
  EXPECT_NE(std::string(e.what()).find("chain.json:4"), std::string::npos) << e.what();
}

TEST(LoadChain, MissingFieldReportsPath) {
  std::string doc = kMinimalChain;
  doc.replace(doc.find("\"axis\""), 6, "\"axes\"");
  const Error e = load_error(doc);
  EXPECT_NE(std::string(e.what()).find("joints[0]"), std::string::npos) << e.what();
}

TEST(LoadChain, RejectsNonUnitQuaternion) {
  std::string doc = kMinimalChain;
  doc.replace(doc.find("[1, 0, 0, 0]"), 12, "[1, 0, 0, 0.1]");
  EXPECT_EQ(load_error(doc).kind(), ErrorKind::Validation);
}

TEST(LoadChain, BundledChainRoundTrips) {
  const KinematicChain chain = load_chain_file(FIDEX_DATA_DIR "/so100_like_chain.json");
  ASSERT_EQ(chain.dof(), 6u);
  for (const JointSpec& j : chain.joints()) {
    const double offset = j.parent_transform.translation.norm();
    EXPECT_GE(offset, 0.03 - 1e-12);
    EXPECT_LE(offset, 0.12 + 1e-12);
  }
  const KinematicChain again = load_chain(save_chain(chain));
  EXPECT_EQ(save_chain(again), save_chain(chain));
  std::mt19937_64 rng(6);
  const JointVector theta = oracle::random_theta(chain, rng);
  const auto a = forward_kinematics(chain, theta);
  const auto b = forward_kinematics(again, theta);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_LT((a[j].matrix() - b[j].matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

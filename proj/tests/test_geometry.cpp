#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fidex/geometry.hpp"
#include "oracles.hpp"

using namespace fidex;
constexpr double kPi = std::numbers::pi;

namespace {

double matrix_gap(const RigidTransform& a, const Mat4& b) { return (oracle::matrix_of(a) - b).cwiseAbs().maxCoeff(); }
double matrix_gap(const RigidTransform& a, const RigidTransform& b) { return matrix_gap(a, oracle::matrix_of(b)); }

RigidTransform rz_t(double angle, double x, double y, double z) { return {rot_z(angle), Vec3(x, y, z)}; }

}  // namespace

TEST(Compose, IdentityIsNeutral) {
  std::mt19937_64 rng(1);
  const RigidTransform t = oracle::random_transform(rng);
  EXPECT_LT(matrix_gap(compose(RigidTransform::identity(), t), t), 1e-12);
  EXPECT_LT(matrix_gap(compose(t, RigidTransform::identity()), t), 1e-12);
}

TEST(Compose, WithInverseGivesIdentity) {
  std::mt19937_64 rng(2);
  const RigidTransform t = oracle::random_transform(rng);
  EXPECT_LT(matrix_gap(compose(t, inverse(t)), Mat4::Identity()), 1e-12);
}

TEST(Compose, QuarterTurnsAgainstMatrixProduct) {
  const RigidTransform a = rz_t(kPi / 2, 1, 0, 0);
  const Mat4 expected = (oracle::translation(1, 0, 0) * oracle::rot_z(kPi / 2)) *
                        (oracle::translation(1, 0, 0) * oracle::rot_z(kPi / 2));
  const RigidTransform c = compose(a, a);
  EXPECT_LT(matrix_gap(c, expected), 1e-12);
  EXPECT_NEAR(c.translation.x(), 1.0, 1e-12);
  EXPECT_NEAR(c.translation.y(), 1.0, 1e-12);
  EXPECT_NEAR(c.rotation.angle(), kPi, 1e-12);
}

TEST(Compose, KeepsQuaternionNormalized) {
  std::mt19937_64 rng(3);
  RigidTransform acc;
  for (int i = 0; i < 10000; ++i) acc = compose(acc, oracle::random_transform(rng, 0.1));
  EXPECT_NEAR(acc.rotation.quaternion().norm(), 1.0, 1e-14);
}

TEST(Inverse, Identity) { EXPECT_LT(matrix_gap(inverse(RigidTransform::identity()), Mat4::Identity()), 0.0 + 1e-15); }

TEST(Inverse, Involution) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = oracle::random_transform(rng, 5.0);
    EXPECT_LT(matrix_gap(inverse(inverse(t)), t), 1e-9);
  }
}

TEST(Inverse, QuarterTurnByHand) {
  // R^T = rotZ(-pi/2); -R^T p = -(0, -1, 0) = (0, 1, 0).
  const RigidTransform inv = inverse(rz_t(kPi / 2, 1, 0, 0));
  EXPECT_LT(matrix_gap(inv, oracle::translation(0, 1, 0) * oracle::rot_z(-kPi / 2)), 1e-12);
}

TEST(Inverse, MatchesMatrixInverse) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = oracle::random_transform(rng, 3.0);
    EXPECT_LT(matrix_gap(inverse(t), oracle::matrix_of(t).inverse()), 1e-12);
  }
}

TEST(Se3Distance, ZeroOnEqualInputs) {
  std::mt19937_64 rng(6);
  const RigidTransform t = oracle::random_transform(rng);
  EXPECT_DOUBLE_EQ(se3_distance(t, t, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(se3_distance(t, t, 7.0), 0.0);
}

TEST(Se3Distance, PureTranslation) {
  EXPECT_NEAR(se3_distance(RigidTransform::identity(), RigidTransform::from_translation(3, 4, 0), 1.0), 5.0, 1e-12);
}

TEST(Se3Distance, PureRotationIsWeightedGeodesicAngle) {
  EXPECT_NEAR(se3_distance(RigidTransform::identity(), RigidTransform::from_rotation(rot_z(kPi / 2)), 2.0), kPi, 1e-12);
}

TEST(Se3Distance, RejectsNonPositiveWeight) {
  EXPECT_THROW(se3_distance(RigidTransform::identity(), RigidTransform::identity(), 0.0), Error);
  EXPECT_THROW(se3_distance(RigidTransform::identity(), RigidTransform::identity(), -1.0), Error);
}

TEST(Se3Distance, AgreesWithMatrixOracle) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform a = oracle::random_transform(rng);
    const RigidTransform b = oracle::random_transform(rng);
    const Mat4 ma = oracle::matrix_of(a);
    const Mat4 mb = oracle::matrix_of(b);
    const double angle =
        oracle::rotation_angle(ma.topLeftCorner<3, 3>().transpose() * mb.topLeftCorner<3, 3>());
    const double expected =
        std::sqrt((ma.topRightCorner<3, 1>() - mb.topRightCorner<3, 1>()).squaredNorm() + 0.09 * angle * angle);
    EXPECT_NEAR(se3_distance(a, b, 0.3), expected, 1e-9);
  }
}

TEST(Exp, ZeroTwistIsIdentity) { EXPECT_LT(matrix_gap(exp(Twist::Zero()), Mat4::Identity()), 1e-15); }

TEST(Exp, PureRotationAboutZ) {
  Twist xi;
  xi << 0, 0, kPi / 2, 0, 0, 0;
  EXPECT_LT(matrix_gap(exp(xi), oracle::rot_z(kPi / 2)), 1e-12);
}

TEST(Exp, RotationPartMatchesRodrigues) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = oracle::random_rotation_vector(rng, 3.0);
    const Mat3 expected = oracle::rodrigues(w, w.norm());
    EXPECT_LT((Rotation::exp(w).matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Log, RoundTripOnRandomTwists) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Twist xi;
    xi.head<3>() = oracle::random_rotation_vector(rng, 3.0);
    xi.tail<3>() = Vec3(u(rng), u(rng), u(rng));
    EXPECT_LT((log(exp(xi)) - xi).cwiseAbs().maxCoeff(), 1e-8) << "case " << i;
  }
}

TEST(Log, ExpOfLogRecoversTransform) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform t = oracle::random_transform(rng, 2.0);
    if (t.rotation.angle() >= kPi - 1e-3) continue;
    EXPECT_LT(matrix_gap(exp(log(t)), t), 1e-8);
  }
}

TEST(Log, RotationVectorMatchesAngleAxisOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Rotation r = oracle::random_rotation(rng);
    if (r.angle() > kPi - 1e-6) continue;
    EXPECT_LT((r.log() - oracle::rotation_vector(r.matrix())).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Log, ThrowsNearPi) {
  try {
    (void)log(RigidTransform::from_rotation(rot_x(kPi)));
    FAIL() << "expected a branch-ambiguity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BranchAmbiguity);
  }
  EXPECT_THROW((void)log(RigidTransform::from_rotation(rot_y(kPi - 5e-7))), Error);
  EXPECT_NO_THROW((void)log(RigidTransform::from_rotation(rot_y(kPi - 2e-6))));
}

TEST(Log, TinyAngles) {
  for (double a : {0.0, 1e-12, 1e-9, 5e-8, 2e-7}) {
    Twist xi;
    xi << a, -a, 0.5 * a, 0.1, 0.2, 0.3;
    EXPECT_LT((log(exp(xi)) - xi).cwiseAbs().maxCoeff(), 1e-12) << a;
  }
}

TEST(TaylorCrossover, BranchesAgreeAtThreshold) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const Vec3 axis = oracle::random_unit(rng);
    for (double scale : {0.999, 1.0, 1.001}) {
      const Vec3 w = axis * (kSmallAngle * scale);
      EXPECT_LT((detail::left_jacobian_general(w) - detail::left_jacobian_taylor(w)).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((detail::left_jacobian_inverse_general(w) - detail::left_jacobian_inverse_taylor(w)).cwiseAbs().maxCoeff(),
                1e-10);
      EXPECT_LT((detail::so3_exp_general(w).coeffs() - detail::so3_exp_taylor(w).coeffs()).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Jacobians, LeftJacobianInverseIsInverse) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = oracle::random_rotation_vector(rng, 3.0);
    EXPECT_LT((so3_left_jacobian(w) * so3_left_jacobian_inverse(w) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Jacobians, RightJacobianInverseMatchesDifferences) {
  std::mt19937_64 rng(14);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi = oracle::random_rotation_vector(rng, 2.5);
    const Mat3 r = oracle::rodrigues(phi, phi.norm());
    Mat3 fd;
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = Vec3::Unit(k) * h;
      fd.col(k) = (oracle::rotation_vector(r * oracle::rodrigues(e, h)) -
                   oracle::rotation_vector(r * oracle::rodrigues(-e, h))) / (2.0 * h);
    }
    EXPECT_LT((so3_right_jacobian_inverse(phi) - fd).cwiseAbs().maxCoeff(), 1e-6);
  }
}

// Group axioms and metric properties over 10^4 random triples.
TEST(GroupProperties, AxiomsOnRandomTriples) {
  std::mt19937_64 rng(15);
  double worst_assoc = 0.0;
  double worst_inverse = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const RigidTransform a = oracle::random_transform(rng, 2.0);
    const RigidTransform b = oracle::random_transform(rng, 2.0);
    const RigidTransform c = oracle::random_transform(rng, 2.0);
    worst_assoc = std::max(worst_assoc, matrix_gap(compose(compose(a, b), c), compose(a, compose(b, c))));
    worst_inverse = std::max(worst_inverse, matrix_gap(compose(inverse(a), a), Mat4::Identity()));
  }
  EXPECT_LT(worst_assoc, 1e-9);
  EXPECT_LT(worst_inverse, 1e-9);
}

TEST(GroupProperties, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 10000; ++i) {
    const RigidTransform a = oracle::random_transform(rng);
    const RigidTransform b = oracle::random_transform(rng);
    const RigidTransform c = oracle::random_transform(rng);
    const double ab = se3_distance(a, b);
    ASSERT_GE(ab, 0.0);
    ASSERT_NEAR(ab, se3_distance(b, a), 1e-12);
    ASSERT_LE(se3_distance(a, c), ab + se3_distance(b, c) + 1e-9);
  }
}

TEST(PoseError, SplitsTranslationAndRotation) {
  const PoseError e = pose_error(rz_t(0.3, 1, 2, 2), RigidTransform::identity());
  EXPECT_NEAR(e.translation, 3.0, 1e-12);
  EXPECT_NEAR(e.rotation, 0.3, 1e-12);
}

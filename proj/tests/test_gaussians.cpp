#include "gala/errors.hpp"
#include "gala/gaussians.hpp"
#include "gala/gradcheck.hpp"

#include "doctest.h"
#include "test_utils.hpp"

#include <cmath>

using namespace gala;
namespace tu = gala::testutil;

namespace {

// Symmetric 3x3 eigenvalues via the classic trigonometric closed form; used
// only as an oracle here.
std::array<double, 3> sym3_eigenvalues(const std::array<double, 6>& cov) {
    const double a = cov[0], b = cov[1], c = cov[2], d = cov[3], e = cov[4], f = cov[5];
    const double p1 = b * b + c * c + e * e;
    const double q = (a + d + f) / 3.0;
    const double p2 = (a - q) * (a - q) + (d - q) * (d - q) + (f - q) * (f - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    if (p < 1e-15) return {q, q, q};
    // B = (A - qI)/p ; r = det(B)/2
    const double b00 = (a - q) / p, b01 = b / p, b02 = c / p;
    const double b11 = (d - q) / p, b12 = e / p, b22 = (f - q) / p;
    double r = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
               b02 * (b01 * b12 - b11 * b02);
    r /= 2.0;
    r = std::clamp(r, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    return {e1, e2, e3};
}

AnchorSet tiny_anchors(RngStream& rng, int per_axis = 2, int k = 2) {
    return make_anchor_grid(per_axis, {-1, -1, -1}, {1, 1, 1}, k, 8, 8, rng);
}

} // namespace

TEST_SUITE_BEGIN("gaussians");

TEST_CASE("identity quaternion gives the identity rotation") {
    const Mat3 r = quaternion_to_rotation({1, 0, 0, 0});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(r(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("quarter turn about x") {
    const double s = std::sqrt(0.5);
    const Mat3 r = quaternion_to_rotation({s, s, 0, 0});
    // rotates +y to +z
    const Vec3 v = r * Vec3{0, 1, 0};
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(1.0));
}

TEST_CASE("random quaternions give orthonormal proper rotations") {
    RngStream rng(5, "quat-ortho");
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 4> q;
        for (auto& v : q) v = rng.normal();
        const Mat3 r = quaternion_to_rotation(q);
        const Mat3 rtr = r.transposed() * r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(std::fabs(rtr(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
        const double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                           r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                           r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
        CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero quaternion is rejected") {
    CHECK_THROWS_AS(quaternion_to_rotation({0, 0, 0, 0}), validation_error);
}

TEST_CASE("covariance of an axis-aligned gaussian is diag(s^2)") {
    const auto cov = build_covariance({1, 0, 0, 0}, {1, 2, 3});
    CHECK(cov[0] == doctest::Approx(1.0));
    CHECK(cov[3] == doctest::Approx(4.0));
    CHECK(cov[5] == doctest::Approx(9.0));
    CHECK(cov[1] == doctest::Approx(0.0));
    CHECK(cov[2] == doctest::Approx(0.0));
    CHECK(cov[4] == doctest::Approx(0.0));
}

TEST_CASE("isotropic scale is rotation invariant") {
    RngStream rng(9, "iso-cov");
    for (int trial = 0; trial < 5; ++trial) {
        std::array<double, 4> q;
        for (auto& v : q) v = rng.normal();
        const double sigma = rng.uniform(0.2, 2.0);
        const auto cov = build_covariance(q, {sigma, sigma, sigma});
        CHECK(cov[0] == doctest::Approx(sigma * sigma).epsilon(1e-12));
        CHECK(cov[3] == doctest::Approx(sigma * sigma).epsilon(1e-12));
        CHECK(cov[5] == doctest::Approx(sigma * sigma).epsilon(1e-12));
        CHECK(std::fabs(cov[1]) < 1e-12);
        CHECK(std::fabs(cov[2]) < 1e-12);
        CHECK(std::fabs(cov[4]) < 1e-12);
    }
}

TEST_CASE("covariance eigenvalues equal squared scales as a multiset") {
    RngStream rng(13, "cov-eig");
    for (int trial = 0; trial < 10; ++trial) {
        std::array<double, 4> q;
        for (auto& v : q) v = rng.normal();
        Vec3 s{rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
        auto cov = build_covariance(q, s);
        auto eig = sym3_eigenvalues(cov);
        std::array<double, 3> want{s.x * s.x, s.y * s.y, s.z * s.z};
        std::sort(eig.begin(), eig.end());
        std::sort(want.begin(), want.end());
        for (int i = 0; i < 3; ++i) CHECK(std::fabs(eig[i] - want[i]) < 1e-10);
    }
}

TEST_CASE("nonpositive scales are rejected") {
    CHECK_THROWS_AS(build_covariance({1, 0, 0, 0}, {1.0, -0.1, 1.0}), validation_error);
    CHECK_THROWS_AS(build_covariance({1, 0, 0, 0}, {0.0, 1.0, 1.0}), validation_error);
}

TEST_CASE("spawn arity and zero-offset collapse") {
    RngStream rng(7, "spawn");
    AnchorSet anchors = make_anchor_grid(1, {-1, -1, -1}, {1, 1, 1}, 3, 8, 8, rng);
    for (std::int64_t i = 0; i < anchors.offsets.value.size(); ++i) anchors.offsets.value.at(i) = 0.0;
    AttributeDecoder dec = make_attribute_decoder(8, 8, 3, 16, 16, std::log(0.05), rng);
    Tape tape;
    NeuralGaussianBatch batch = spawn_gaussians(tape, anchors, dec, {5, 0, 0});
    CHECK(batch.count == 3);
    const Tensor& means = tape.value(batch.means);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(means(r, c) == doctest::Approx(anchors.positions(0, c)));
}

TEST_CASE("spawned attribute ranges and unit quaternions") {
    RngStream rng(17, "spawn-ranges");
    AnchorSet anchors = tiny_anchors(rng);
    AttributeDecoder dec = make_attribute_decoder(8, 8, 2, 16, 16, std::log(0.05), rng);
    Tape tape;
    NeuralGaussianBatch batch = spawn_gaussians(tape, anchors, dec, {3, 2, 1});
    CHECK(batch.count == anchors.count * 2);
    const Tensor& alpha = tape.value(batch.opacities);
    const Tensor& scales = tape.value(batch.scales);
    const Tensor& rots = tape.value(batch.rotations);
    for (int i = 0; i < batch.count; ++i) {
        CHECK(alpha(i, 0) > 0.0);
        CHECK(alpha(i, 0) < 1.0);
        for (int j = 0; j < 3; ++j) CHECK(scales(i, j) > 0.0);
        double n = 0.0;
        for (int j = 0; j < 4; ++j) n += rots(i, j) * rots(i, j);
        CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-9);
    }
}

TEST_CASE("instance features ignore the camera, geometry heads do not") {
    RngStream rng(23, "spawn-view");
    AnchorSet anchors = tiny_anchors(rng);
    AttributeDecoder dec = make_attribute_decoder(8, 8, 2, 16, 16, std::log(0.05), rng);
    Tape tape_a;
    NeuralGaussianBatch a = spawn_gaussians(tape_a, anchors, dec, {5, 0, 0});
    Tape tape_b;
    NeuralGaussianBatch b = spawn_gaussians(tape_b, anchors, dec, {0, 5, 2});

    const Tensor& fa = tape_a.value(a.features);
    const Tensor& fb = tape_b.value(b.features);
    for (std::int64_t i = 0; i < fa.size(); ++i) CHECK(fa.at(i) == fb.at(i)); // bitwise

    const Tensor& ca = tape_a.value(a.colors);
    const Tensor& cb = tape_b.value(b.colors);
    double diff = 0.0;
    for (std::int64_t i = 0; i < ca.size(); ++i) diff += std::fabs(ca.at(i) - cb.at(i));
    CHECK(diff > 1e-9);
}

TEST_CASE("camera at an anchor flags the degenerate direction") {
    RngStream rng(29, "spawn-degenerate");
    AnchorSet anchors = tiny_anchors(rng);
    AttributeDecoder dec = make_attribute_decoder(8, 8, 2, 16, 16, std::log(0.05), rng);
    const Vec3 at_anchor{anchors.positions(0, 0), anchors.positions(0, 1), anchors.positions(0, 2)};
    Tape tape;
    NeuralGaussianBatch batch = spawn_gaussians(tape, anchors, dec, at_anchor);
    CHECK(batch.degenerate_direction_flagged);
}

TEST_CASE("covariance tape op gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream rng(seed, "cov-fd");
        Parameter raw_q("raw_q", tu::random_normal({4, 4}, rng, 0.5));
        Parameter log_s("log_s", tu::random_tensor({4, 3}, rng, -1.5, 0.5));
        for (int i = 0; i < 4; ++i) raw_q.value(i, 0) += 1.0; // keep away from zero
        auto build = [&](Tape& t) {
            Var q = ops::rows_normalize(t.param(raw_q), 1e-12, true);
            Var s = ops::exp_elem(t.param(log_s));
            Var cov = covariance_from_quat_scale(q, s);
            return ops::mean_all(ops::mul(cov, cov));
        };
        auto report = finite_diff_check(build, {&raw_q, &log_s});
        CHECK_MESSAGE(report.max_rel_err < 1e-6, "seed ", seed, " worst ", report.worst_param);
    }
}

TEST_SUITE_END();

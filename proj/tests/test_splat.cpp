#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dragsplat/splat.hpp"

#include <cstdio>
#include <random>

using namespace dragsplat;
using namespace dragsplat::splat;

namespace {

Camera test_camera(double azimuth = 0.0, int res = 4) {
    Camera c;
    c.position = {2.4 * std::cos(azimuth), 2.4 * std::sin(azimuth), 1.5};
    c.target = {0, 0, 0};
    c.up = {0, 0, 1};
    c.height = res;
    c.width = res;
    return c;
}

SplatterImage random_splat(int V, int H, int W, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    SplatterImage s;
    s.values = Tensor({V, H, W, kChannels});
    for (long i = 0; i < s.values.numel(); ++i) s.values.d[i] = nd(rng);
    for (int v = 0; v < V; ++v) s.cameras.push_back(test_camera(v * 1.0, H));
    return s;
}

}  // namespace

TEST_CASE("activate: quaternion normalization, sigmoid opacity, softplus scale") {
    SplatterImage s;
    s.values = Tensor({1, 1, 1, kChannels});
    double* px = s.values.d.data();
    px[6] = 2.0;  // raw quaternion (2,0,0,0)
    s.cameras.push_back(test_camera(0.0, 1));
    GaussianSet g = activate(s);
    CHECK(g.rotations(0, 0) == doctest::Approx(1.0));
    CHECK(g.rotations(0, 1) == doctest::Approx(0.0));
    CHECK(g.opacities[0] == doctest::Approx(0.5));  // sigmoid(0)
    for (int k = 0; k < 3; ++k) CHECK(g.scales(0, k) == doctest::Approx(std::log(2.0)));
    g.validate();
}

TEST_CASE("activate rejects non-finite input") {
    SplatterImage s = random_splat(1, 2, 2, 7);
    s.values.d[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(activate(s));
}

TEST_CASE("activate round-trips through the inverse maps") {
    SplatterImage s = random_splat(2, 3, 3, 11);
    GaussianSet g = activate(s);
    // Re-encode the activated set through logit / inverse-softplus and re-activate.
    SplatterImage enc = s;
    const long per_view = 9;
    for (int v = 0; v < 2; ++v) {
        Eigen::MatrixXd origins, dirs;
        view_rays(s.cameras[v], origins, dirs);
        for (long p = 0; p < per_view; ++p) {
            long i = v * per_view + p;
            double* px = enc.values.d.data() + i * kChannels;
            Eigen::Vector3d anchor = origins.row(p).transpose() + kAnchorDepth * dirs.row(p).transpose();
            for (int k = 0; k < 3; ++k) px[k] = (g.centers(i, k) - anchor[k]) / kOffsetScale;
            for (int k = 0; k < 3; ++k) px[3 + k] = inv_softplus(g.scales(i, k));
            for (int k = 0; k < 4; ++k) px[6 + k] = g.rotations(i, k);
            px[10] = logit(g.opacities[i]);
            for (int k = 0; k < 3; ++k) px[11 + k] = logit(g.colors(i, k));
        }
    }
    GaussianSet g2 = activate(enc);
    CHECK((g2.centers - g.centers).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((g2.scales - g.scales).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((g2.rotations - g.rotations).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((g2.opacities - g.opacities).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((g2.colors - g.colors).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("match_loss basics") {
    SplatterImage a = random_splat(1, 2, 2, 3);
    CHECK(match_loss(a, a) == 0.0);

    SplatterImage b = a;
    b.values.d[6] += 1.0;
    CHECK(match_loss(a, b) == doctest::Approx(1.0));
    CHECK(match_loss(b, a) == doctest::Approx(1.0));  // symmetric in value
}

TEST_CASE("match_loss equals a brute-force loop oracle") {
    SplatterImage a = random_splat(1, 2, 2, 21);
    SplatterImage b = random_splat(1, 2, 2, 22);
    b.cameras = a.cameras;
    double oracle = 0.0;
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w)
            for (int ch = 0; ch < kChannels; ++ch) {
                long i = (static_cast<long>(h) * 2 + w) * kChannels + ch;
                double d = a.values.d[i] - b.values.d[i];
                oracle += d * d;
            }
    CHECK(match_loss(a, b) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(match_loss(a, b) >= 0.0);
}

TEST_CASE("match_loss names both shapes on mismatch") {
    SplatterImage a = random_splat(1, 2, 2, 1);
    SplatterImage b = random_splat(1, 3, 3, 2);
    try {
        match_loss(a, b);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("[1x2x2x14]") != std::string::npos);
        CHECK(msg.find("[1x3x3x14]") != std::string::npos);
    }
}

TEST_CASE("merge: count invariant and coincident duplicate views") {
    SplatterImage s = random_splat(4, 2, 2, 5);
    GaussianSet g = merge(s);
    CHECK(g.size() == 4 * 2 * 2);

    // V=1: merge equals activate
    SplatterImage one = random_splat(1, 3, 3, 6);
    GaussianSet m = merge(one);
    GaussianSet a = activate(one);
    CHECK((m.centers - a.centers).cwiseAbs().maxCoeff() == 0.0);

    // two identical views produce two coincident copies
    SplatterImage dup;
    dup.values = Tensor({2, 2, 2, kChannels});
    SplatterImage base = random_splat(1, 2, 2, 9);
    dup.values.d.segment(0, base.values.numel()) = base.values.d;
    dup.values.d.segment(base.values.numel(), base.values.numel()) = base.values.d;
    dup.cameras = {base.cameras[0], base.cameras[0]};
    GaussianSet d = merge(dup);
    CHECK((d.centers.topRows(4) - d.centers.bottomRows(4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("match_loss gradient flows only into the student") {
    SplatterImage a = random_splat(1, 2, 2, 31);
    SplatterImage b = random_splat(1, 2, 2, 32);
    ad::Var student = ad::param(a.values);
    ad::Var loss = match_loss_ad(student, b);
    CHECK(loss->val.d[0] == doctest::Approx(match_loss(a, {b.values, a.cameras})));
    ad::backward(loss);
    Tensor expected(a.values.shape);
    expected.d = 2.0 * (a.values.d - b.values.d);
    CHECK((student->g().d - expected.d).abs().maxCoeff() < 1e-12);
}

TEST_CASE("serialization round trip") {
    SplatterImage s = random_splat(2, 4, 4, 77);
    // float32 container: store float-exact values so the round trip is exact
    for (long i = 0; i < s.values.numel(); ++i) s.values.d[i] = static_cast<float>(s.values.d[i]);
    std::string path = "splat_roundtrip_test";
    save(s, path);
    SplatterImage r = load(path);
    CHECK(r.values.shape == s.values.shape);
    CHECK((r.values.d - s.values.d).abs().maxCoeff() == 0.0);
    CHECK(r.cameras.size() == s.cameras.size());
    CHECK((r.cameras[1].position - s.cameras[1].position).norm() == 0.0);
    std::remove((path + ".bin").c_str());
    std::remove((path + ".json").c_str());
}

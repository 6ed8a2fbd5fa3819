#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dragsplat/assets.hpp"
#include "dragsplat/png_io.hpp"

#include <cstdio>
#include <random>

using namespace dragsplat;
using namespace dragsplat::assets;

namespace {

PosedStage single_box_stage(double half) {
    ArticulatedAsset a;
    a.body.vertices.resize(8, 3);
    // reuse make_asset's box topology via a throwaway drawer and rescale
    ArticulatedAsset d = make_asset("drawer", 1);
    a.body = d.body;
    Eigen::Vector3d lo = a.body.vertices.colwise().minCoeff();
    Eigen::Vector3d hi = a.body.vertices.colwise().maxCoeff();
    Eigen::Vector3d c = 0.5 * (lo + hi), ext = hi - lo;
    for (long i = 0; i < 8; ++i)
        for (int k = 0; k < 3; ++k)
            a.body.vertices(i, k) = (a.body.vertices(i, k) - c[k]) / ext[k] * 2.0 * half;

    PosedStage st;
    st.mesh = a.body;
    st.face_part.assign(static_cast<size_t>(st.mesh.face_count()), -1);
    st.face_color.assign(static_cast<size_t>(st.mesh.face_count()), {0.7, 0.7, 0.7});
    return st;
}

// Slab-method ray/AABB entry distance; +inf on miss.
double ray_box_depth(const Eigen::Vector3d& o, const Eigen::Vector3d& dir, double half) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (std::abs(dir[k]) < 1e-15) {
            if (std::abs(o[k]) > half) return std::numeric_limits<double>::infinity();
            continue;
        }
        double a = (-half - o[k]) / dir[k], b = (half - o[k]) / dir[k];
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
    }
    return t0 <= t1 ? t0 : std::numeric_limits<double>::infinity();
}

}  // namespace

TEST_CASE("asset generation is deterministic for a fixed template and seed") {
    ArticulatedAsset a = make_asset("drawer", 7);
    ArticulatedAsset b = make_asset("drawer", 7);
    CHECK((a.body.vertices - b.body.vertices).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.parts[0].mesh.vertices - b.parts[0].mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.parts[0].joint.q_max == b.parts[0].joint.q_max);
    CHECK((a.parts[0].color - b.parts[0].color).cwiseAbs().maxCoeff() == 0.0);

    ArticulatedAsset c = make_asset("drawer", 8);
    CHECK((a.body.vertices - c.body.vertices).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS(make_asset("toaster", 1));
}

TEST_CASE("door joint is revolute with limits [0, pi/2]") {
    ArticulatedAsset a = make_asset("door", 3);
    REQUIRE(a.parts.size() == 1);
    CHECK(a.parts[0].joint.type == JointSpec::Type::revolute);
    CHECK(a.parts[0].joint.q_min == 0.0);
    CHECK(a.parts[0].joint.q_max == doctest::Approx(M_PI / 2).epsilon(1e-12));
    CHECK(std::abs(a.parts[0].joint.axis.norm() - 1.0) < 1e-12);
}

TEST_CASE("drawer slides along its front-face normal") {
    for (uint64_t seed : {1, 2, 3}) {
        ArticulatedAsset a = make_asset("drawer", seed);
        REQUIRE(a.parts.size() == 1);
        CHECK(a.parts[0].joint.type == JointSpec::Type::prismatic);
        // the front face of the body is the +x face, normal (1, 0, 0)
        CHECK(std::abs(a.parts[0].joint.axis.dot(Eigen::Vector3d(1, 0, 0)) - 1.0) < 1e-6);
    }
}

TEST_CASE("extreme poses of the asset fill a unit box at the origin") {
    for (const char* templ : {"drawer", "door"}) {
        ArticulatedAsset a = make_asset(templ, 11);
        Eigen::Vector3d lo = a.body.vertices.colwise().minCoeff().transpose();
        Eigen::Vector3d hi = a.body.vertices.colwise().maxCoeff().transpose();
        for (const auto& p : a.parts)
            for (double q : {0.0, 1.0}) {
                TriMesh m = posed_part(p, q);
                lo = lo.cwiseMin(m.vertices.colwise().minCoeff().transpose());
                hi = hi.cwiseMax(m.vertices.colwise().maxCoeff().transpose());
            }
        CHECK(lo.minCoeff() >= -0.5 - 1e-9);
        CHECK(hi.maxCoeff() <= 0.5 + 1e-9);
        CHECK((hi - lo).maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((lo + hi).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("animate produces evenly spaced normalized states") {
    ArticulatedAsset a = make_asset("drawer", 5);
    auto stages = animate(a, 0, 6);
    REQUIRE(stages.size() == 6);
    for (int s = 0; s < 6; ++s) CHECK(stages[s].q == doctest::Approx(s / 5.0).epsilon(1e-12));
    CHECK_THROWS(animate(a, 1, 6));
    CHECK_THROWS(animate(a, -1, 6));
    CHECK_THROWS(animate(a, 0, 1));
}

TEST_CASE("prismatic stages are rigid translations of stage 0") {
    ArticulatedAsset a = make_asset("drawer", 9);
    auto stages = animate(a, 0, 6);
    const JointSpec& j = a.parts[0].joint;
    long nb = a.body.vertices.rows();
    long np = a.parts[0].mesh.vertices.rows();
    Eigen::MatrixXd base = stages[0].mesh.vertices.middleRows(nb, np);
    for (const auto& st : stages) {
        Eigen::Vector3d shift = j.axis * (j.q_min + st.q * (j.q_max - j.q_min));
        Eigen::MatrixXd expect = base.rowwise() + shift.transpose();
        CHECK((st.mesh.vertices.middleRows(nb, np) - expect).cwiseAbs().maxCoeff() < 1e-12);
        // body never moves
        CHECK((st.mesh.vertices.topRows(nb) - a.body.vertices).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("revolute stages keep every vertex at constant distance from the hinge axis") {
    ArticulatedAsset a = make_asset("door", 13);
    const JointSpec& j = a.parts[0].joint;
    auto dist_to_axis = [&](const Eigen::Vector3d& p) {
        Eigen::Vector3d r = p - j.pivot;
        return (r - j.axis * j.axis.dot(r)).norm();
    };
    TriMesh base = posed_part(a.parts[0], 0.0);
    for (double q : {0.0, 0.3, 0.7, 1.0}) {
        TriMesh m = posed_part(a.parts[0], q);
        for (long v = 0; v < m.vertices.rows(); ++v) {
            CHECK(std::abs(dist_to_axis(m.vertices.row(v)) - dist_to_axis(base.vertices.row(v))) <
                  1e-9);
            // height along the axis is preserved too
            CHECK(std::abs(j.axis.dot(m.vertices.row(v).transpose() - j.pivot) -
                           j.axis.dot(base.vertices.row(v).transpose() - j.pivot)) < 1e-9);
        }
    }
    // q = 1 actually rotates by pi/2: a point on the panel far from the hinge moves
    TriMesh open = posed_part(a.parts[0], 1.0);
    CHECK((open.vertices - base.vertices).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("pairwise distances within a posed part are preserved") {
    for (const char* templ : {"drawer", "door"}) {
        ArticulatedAsset a = make_asset(templ, 21);
        TriMesh base = posed_part(a.parts[0], 0.0);
        TriMesh moved = posed_part(a.parts[0], 0.6);
        for (long i = 0; i < base.vertices.rows(); ++i)
            for (long k = i + 1; k < base.vertices.rows(); ++k) {
                double d0 = (base.vertices.row(i) - base.vertices.row(k)).norm();
                double d1 = (moved.vertices.row(i) - moved.vertices.row(k)).norm();
                CHECK(std::abs(d0 - d1) < 1e-6);
            }
    }
}

TEST_CASE("view rig: 12 cameras at 30 degree azimuth spacing, radius 2.4, height 1.5") {
    auto rig = view_rig(32);
    REQUIRE(rig.size() == 12);
    for (int k = 0; k < 12; ++k) {
        const Camera& c = rig[static_cast<size_t>(k)];
        CHECK(c.position.head<2>().norm() == doctest::Approx(2.4).epsilon(1e-12));
        CHECK(c.position.z() == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(c.target.norm() == 0.0);
        double az = std::atan2(c.position.y(), c.position.x());
        if (az < -1e-9) az += 2.0 * M_PI;
        CHECK(az == doctest::Approx(k * M_PI / 6.0).epsilon(1e-9));
        CHECK(c.width == 32);
        CHECK(c.height == 32);
    }
}

TEST_CASE("rendered mask pixels are always covered pixels") {
    ArticulatedAsset a = make_asset("drawer", 4);
    auto stages = animate(a, 0, 6);
    ViewRender v = render_mesh(stages[5], 0, view_rig(48)[0]);
    int masked = 0;
    for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c) {
            size_t i = static_cast<size_t>(r) * 48 + c;
            if (v.mask[i]) {
                ++masked;
                CHECK(v.rgba.d[(static_cast<long>(r) * 48 + c) * 4 + 3] == 1.0);
                CHECK(std::isfinite(v.depth(r, c)));
            }
        }
    CHECK(masked > 0);  // the open drawer front is visible from the front camera
    // background pixels carry zero alpha and infinite depth
    bool saw_background = false;
    for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c)
            if (v.rgba.d[(static_cast<long>(r) * 48 + c) * 4 + 3] == 0.0) {
                saw_background = true;
                CHECK(std::isinf(v.depth(r, c)));
            }
    CHECK(saw_background);
}

TEST_CASE("rasterized depth matches the analytic ray-box intersection") {
    const double half = 0.3;
    PosedStage st = single_box_stage(half);
    Camera cam = view_rig(40)[2];
    ViewRender v = render_mesh(st, 0, cam);
    int compared = 0;
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) {
            double analytic = ray_box_depth(cam.position, cam.ray_dir(r, c), half);
            if (std::isfinite(v.depth(r, c)) && std::isfinite(analytic)) {
                CHECK(std::abs(v.depth(r, c) - analytic) < 1e-4);
                ++compared;
            }
        }
    CHECK(compared > 50);
}

TEST_CASE("surface sampling is deterministic and lands on the mesh") {
    const double half = 0.3;
    PosedStage st = single_box_stage(half);
    Eigen::MatrixXd p1 = sample_surface(st.mesh, 200, 17);
    Eigen::MatrixXd p2 = sample_surface(st.mesh, 200, 17);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd p3 = sample_surface(st.mesh, 200, 18);
    CHECK((p1 - p3).cwiseAbs().maxCoeff() > 0.0);
    for (long i = 0; i < p1.rows(); ++i) {
        Eigen::Vector3d p = p1.row(i);
        CHECK(p.cwiseAbs().maxCoeff() <= half + 1e-12);
        // on a box surface at least one coordinate sits on a face plane
        CHECK((p.cwiseAbs().array() - half).abs().minCoeff() < 1e-12);
    }
    TriMesh empty;
    CHECK_THROWS(sample_surface(empty, 10, 0));
}

TEST_CASE("png round trip preserves rgba and grayscale bytes") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 255);
    const int H = 13, W = 9;
    std::vector<uint8_t> rgba(static_cast<size_t>(H) * W * 4);
    for (auto& b : rgba) b = static_cast<uint8_t>(u(rng));
    png::write_rgba("rt_rgba.png", H, W, rgba);
    png::ImageU8 img = png::read("rt_rgba.png");
    CHECK(img.height == H);
    CHECK(img.width == W);
    CHECK(img.channels == 4);
    CHECK(img.data == rgba);

    std::vector<uint8_t> gray(static_cast<size_t>(H) * W);
    for (auto& b : gray) b = static_cast<uint8_t>(u(rng));
    png::write_gray("rt_gray.png", H, W, gray);
    png::ImageU8 g = png::read("rt_gray.png");
    CHECK(g.channels == 1);
    CHECK(g.data == gray);
    std::remove("rt_rgba.png");
    std::remove("rt_gray.png");
}

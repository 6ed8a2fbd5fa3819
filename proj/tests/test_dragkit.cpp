#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dragsplat/dragkit.hpp"
#include "dragsplat/json_util.hpp"

#include <cstdio>

using namespace dragsplat;
using namespace dragsplat::dragkit;

namespace {

// 10x10 all-ones mask
std::vector<uint8_t> full_mask() { return std::vector<uint8_t>(100, 1); }

Drag simple_drag() {
    Drag a;
    a.src = {0.25, 0.35};
    a.dst = {0.45, 0.35};
    return a;
}

}  // namespace

TEST_CASE("drag validation rejects out-of-square endpoints") {
    Drag a = simple_drag();
    CHECK_NOTHROW(a.validate());
    a.dst = {1.2, 0.5};
    CHECK_THROWS(a.validate());
    a = simple_drag();
    a.src = {-0.1, 0.5};
    CHECK_THROWS(a.validate());
}

TEST_CASE("sampled drags come from visible part pixels") {
    auto asset = assets::make_asset("drawer", 2);
    Camera cam = assets::view_rig(64)[0];  // front of the drawer
    auto drags = sample_drags(asset, 0, 0.0, 1.0, cam, 200, 5);
    CHECK(!drags.empty());
    CHECK(drags.size() < 200);  // back/side faces of the part are occluded

    auto stage = assets::pose_stage(asset, 0, 0.0);
    auto view = assets::render_mesh(stage, 0, cam);
    for (const auto& d : drags) {
        d.validate();
        int col = std::min(63, static_cast<int>(d.src.x() * 64));
        int row = std::min(63, static_cast<int>(d.src.y() * 64));
        CHECK(view.part_id[static_cast<size_t>(row) * 64 + col] == 0);
        CHECK(d.cls == 0);  // prismatic -> translation
    }

    auto again = sample_drags(asset, 0, 0.0, 1.0, cam, 200, 5);
    REQUIRE(again.size() == drags.size());
    for (size_t i = 0; i < drags.size(); ++i) {
        CHECK(again[i].src == drags[i].src);
        CHECK(again[i].dst == drags[i].dst);
    }
}

TEST_CASE("identity motion yields dst equal to src") {
    auto asset = assets::make_asset("door", 6);
    Camera cam = assets::view_rig(64)[1];
    auto drags = sample_drags(asset, 0, 0.3, 0.3, cam, 64, 9);
    CHECK(!drags.empty());
    for (const auto& d : drags) CHECK((d.dst - d.src).norm() == 0.0);
}

TEST_CASE("fully occluded part raises an error suggesting another view") {
    auto asset = assets::make_asset("drawer", 2);
    Camera cam = assets::view_rig(64)[6];  // behind: the closed drawer is hidden by the body
    CHECK_THROWS_WITH_AS(sample_drags(asset, 0, 0.0, 1.0, cam, 100, 5),
                         doctest::Contains("another view"), std::runtime_error);
}

TEST_CASE("translation propagation copies the displacement to every sample") {
    Drag a = simple_drag();
    auto out = propagate_translation(a, full_mask(), 10, 10, 12, 3);
    REQUIRE(out.size() == 12);
    for (const auto& d : out) {
        if (!d.clipped) CHECK((d.delta() - a.delta()).norm() < 1e-15);  // ulp noise from src + delta
        CHECK(d.delta().norm() <= a.delta().norm() + 1e-15);
        d.validate();
    }

    // ((0.2,0.3)->(0.4,0.3)) sampled at (0.25,0.35) -> (0.45,0.35)
    Drag b;
    b.src = {0.2, 0.3};
    b.dst = {0.4, 0.3};
    std::vector<uint8_t> one(100, 0);
    one[3 * 10 + 2] = 1;  // sole pixel, center (0.25, 0.35)
    auto forced = propagate_translation(b, one, 10, 10, 1, 0);
    // precondition: b.src pixel (row 3, col 2) is inside the mask
    REQUIRE(forced.size() == 1);
    CHECK(forced[0].src.x() == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(forced[0].src.y() == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(forced[0].dst.x() == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(forced[0].dst.y() == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(!forced[0].clipped);

    // sampler forced to a.src reproduces the input drag
    Drag c;
    c.src = {0.25, 0.35};
    c.dst = {0.65, 0.55};
    auto same = propagate_translation(c, one, 10, 10, 1, 0);
    CHECK((same[0].src - c.src).norm() < 1e-12);
    CHECK((same[0].dst - c.dst).norm() < 1e-12);
}

TEST_CASE("out-of-bounds propagated destinations are clipped and flagged") {
    Drag a;
    a.src = {0.1, 0.5};
    a.dst = {0.95, 0.5};  // large +x displacement pushes most samples off the edge
    auto out = propagate_translation(a, full_mask(), 10, 10, 40, 11);
    int clipped = 0;
    for (const auto& d : out) {
        d.validate();  // clipping keeps everything in [0,1]^2
        if (d.clipped) ++clipped;
    }
    CHECK(clipped > 0);
    CHECK(clipped < 40);
}

TEST_CASE("propagation rejects degenerate input") {
    Drag a = simple_drag();
    std::vector<uint8_t> empty(100, 0);
    CHECK_THROWS(propagate_translation(a, empty, 10, 10, 4, 0));
    CHECK_THROWS(propagate_rotation(a, empty, 10, 10, 4, 0));

    Drag zero = a;
    zero.dst = zero.src;
    CHECK_THROWS(propagate_translation(zero, full_mask(), 10, 10, 4, 0));
    CHECK_THROWS(propagate_rotation(zero, full_mask(), 10, 10, 4, 0));

    std::vector<uint8_t> elsewhere(100, 0);
    elsewhere[99] = 1;  // src pixel not in the mask
    CHECK_THROWS(propagate_translation(a, elsewhere, 10, 10, 4, 0));

    Drag unknown = a;
    CHECK_THROWS(propagate(unknown, full_mask(), 10, 10, 4, 0));
    unknown.cls = 0;
    CHECK_NOTHROW(propagate(unknown, full_mask(), 10, 10, 4, 0));
}

TEST_CASE("rotation propagation matches the formula oracle") {
    Drag a;
    a.src = {0.15, 0.15};
    a.dst = {0.45, 0.25};
    auto out = propagate_rotation(a, full_mask(), 10, 10, 16, 21);
    REQUIRE(out.size() == 16);

    Eigen::Vector2d delta = a.delta();
    double mx = 0.0;  // the input source contributes inner product 0
    for (const auto& d : out) mx = std::max(mx, delta.dot(d.src - a.src));
    REQUIRE(mx > 1e-9);
    for (const auto& d : out) {
        if (d.clipped) continue;
        double ip = delta.dot(d.src - a.src);
        Eigen::Vector2d expect = delta * (1.0 - ip / mx);
        CHECK((d.delta() - expect).norm() < 1e-9);
        // magnitudes stay within [0, |delta|] for non-negative inner products
        if (ip >= 0.0) CHECK(d.delta().norm() <= delta.norm() + 1e-12);
    }
    // the argmax sample moves by exactly zero
    double min_disp = 1e9;
    for (const auto& d : out) min_disp = std::min(min_disp, d.delta().norm());
    CHECK(min_disp < 1e-12);
}

TEST_CASE("rotation rule falls back to translation when the max inner product vanishes") {
    Drag a;
    a.src = {0.25, 0.35};
    a.dst = {0.65, 0.55};
    std::vector<uint8_t> one(100, 0);
    one[3 * 10 + 2] = 1;  // only a.src itself -> max inner product 0
    auto out = propagate_rotation(a, one, 10, 10, 3, 0);
    REQUIRE(out.size() == 3);
    for (const auto& d : out) CHECK((d.delta() - a.delta()).norm() < 1e-12);
}

TEST_CASE("part mask lookup returns the stored mask bit-for-bit") {
    auto asset = assets::make_asset("drawer", 4);
    auto stage = assets::pose_stage(asset, 0, 1.0);
    auto view = assets::render_mesh(stage, 0, assets::view_rig(48)[0]);

    int pr = -1, pc = -1, br = -1, bc = -1, gr = -1, gc = -1;
    for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c) {
            int pid = view.part_id[static_cast<size_t>(r) * 48 + c];
            if (pid == 0 && pr < 0) pr = r, pc = c;
            if (pid == -1 && br < 0) br = r, bc = c;
            if (pid == -2 && gr < 0) gr = r, gc = c;
        }
    REQUIRE(pr >= 0);
    REQUIRE(br >= 0);
    REQUIRE(gr >= 0);

    auto mask = part_mask(view, pr, pc);
    for (size_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == (view.part_id[i] == 0 ? 1 : 0));
    CHECK(mask == view.mask);  // moving part of this render

    CHECK_THROWS(part_mask(view, br, bc));  // static body
    CHECK_THROWS(part_mask(view, gr, gc));  // background
    CHECK_THROWS(part_mask(view, -1, 0));
}

TEST_CASE("drag channel ramps from src to dst") {
    Drag a;
    a.src = {0.225, 0.525};  // pixel centers (col 4, row 10) and (col 15, row 10)
    a.dst = {0.775, 0.525};
    Tensor m = drag_channel(a, 20, 20);
    // endpoints: src pixel holds the ramp base, dst pixel the ramp top
    CHECK(m.d[10 * 20 + 4] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(m.d[10 * 20 + 15] == doctest::Approx(1.0).epsilon(1e-12));
    int nonzero = 0;
    for (long i = 0; i < m.numel(); ++i)
        if (m.d[i] != 0.0) ++nonzero;
    CHECK(nonzero == 12);  // one row of pixels between the endpoints
}

TEST_CASE("classifier is deterministic, 2-way, and round-trips through disk") {
    auto asset = assets::make_asset("door", 8);
    auto view = assets::render_mesh(assets::pose_stage(asset, 0, 0.5), 0, assets::view_rig(32)[1]);
    Drag a;
    a.src = {0.4, 0.4};
    a.dst = {0.6, 0.5};

    DragClassifier c = DragClassifier::init(32, 1);
    Tensor l1 = c.logits(view.rgba, a)->val;
    Tensor l2 = c.logits(view.rgba, a)->val;
    CHECK((l1.d - l2.d).abs().maxCoeff() == 0.0);
    CHECK(l1.shape == std::vector<int>{1, 2});

    CHECK_THROWS(c.classify(view.rgba, a));  // untrained
    c.trained = true;
    int label = c.classify(view.rgba, a);
    CHECK((label == 0 || label == 1));

    c.save("cls_rt.bin");
    DragClassifier r = DragClassifier::load("cls_rt.bin");
    CHECK(r.trained);
    CHECK((r.logits(view.rgba, a)->val.d - l1.d).abs().maxCoeff() == 0.0);
    std::remove("cls_rt.bin");

    CHECK_THROWS(DragClassifier::init(30, 1));
}

TEST_CASE("drags serialize to json and back") {
    Drag a = simple_drag();
    a.cls = 1;
    a.clipped = true;
    nlohmann::json j = a;
    Drag b = j.get<Drag>();
    CHECK((a.src - b.src).norm() == 0.0);
    CHECK((a.dst - b.dst).norm() == 0.0);
    CHECK(b.cls == 1);
    CHECK(b.clipped);
}

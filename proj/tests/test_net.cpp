#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dragsplat/net.hpp"
#include "dragsplat/optim.hpp"
#include "dragsplat/raster.hpp"
#include "gradcheck.hpp"

#include <cstdio>
#include <random>

using namespace dragsplat;
using namespace dragsplat::net;

namespace {

NetConfig tiny_config() {
    NetConfig c;
    c.input_res = 8;
    c.views = 2;
    c.stem_width = 4;
    c.widths = {4, 6, 8};
    c.fuse_at = {0, 1, 2};
    c.seed = 5;
    return c;
}

Tensor random_input(const NetConfig& c, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    Tensor t({c.views, 10, c.input_res, c.input_res});
    for (long i = 0; i < t.numel(); ++i) t.d[i] = g(rng);
    return t;
}

std::vector<dragkit::Drag> two_drags() {
    dragkit::Drag a, b;
    a.src = {0.3, 0.4};
    a.dst = {0.6, 0.4};
    b.src = {0.7, 0.7};
    b.dst = {0.75, 0.6};
    return {a, b};
}

}  // namespace

TEST_CASE("config validation and hashing") {
    NetConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    CHECK(c.hash() == tiny_config().hash());

    NetConfig other = c;
    other.widths = {4, 6, 10};
    CHECK(other.hash() != c.hash());

    other = c;
    other.input_res = 12;  // not a multiple of 8
    CHECK_THROWS(other.validate());
    other = c;
    other.widths = {4, 6};
    CHECK_THROWS(other.validate());
    other = c;
    other.fuse_at = {0, 3};
    CHECK_THROWS(other.validate());
}

TEST_CASE("forward emits the raw splatter shape and enforces its contract") {
    NetConfig c = tiny_config();
    Backbone m = Backbone::init(c);
    Tensor in = random_input(c, 1);
    ad::Var out = m.forward(in, two_drags());
    CHECK(out->val.shape == std::vector<int>{2, 4, 4, 14});
    CHECK(out->val.all_finite());

    // determinism for fixed weights and input
    CHECK((m.forward(in, two_drags())->val.d - out->val.d).abs().maxCoeff() == 0.0);

    Tensor bad({2, 10, 16, 16});
    CHECK_THROWS(m.forward(bad, {}));
    auto drags = two_drags();
    drags[0].view = 1;
    CHECK_THROWS(m.forward(in, drags));
}

TEST_CASE("zero drags with fresh fusion convs match the drag-free backbone") {
    NetConfig with = tiny_config();
    NetConfig without = with;
    without.fuse_at = {};
    Backbone a = Backbone::init(with);
    Backbone b = Backbone::init(without);
    Tensor in = random_input(with, 3);
    CHECK((a.forward(in, {})->val.d - b.forward(in, {})->val.d).abs().maxCoeff() == 0.0);
    // and even with drags the zero-init fusion is still a no-op
    CHECK((a.forward(in, two_drags())->val.d - b.forward(in, {})->val.d).abs().maxCoeff() == 0.0);
}

TEST_CASE("loss gradients on probed weights match finite differences") {
    NetConfig c = tiny_config();
    Backbone m = Backbone::init(c);
    Tensor in = random_input(c, 7);
    Tensor tgt({2, 4, 4, 14});
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    for (long i = 0; i < tgt.numel(); ++i) tgt.d[i] = g(rng);

    auto drags = two_drags();
    auto build = [&] { return ad::mse(m.forward(in, drags), ad::constant(tgt)); };
    ad::Var loss = build();
    ad::backward(loss);

    std::vector<ad::Var> probes{m.stem_b,       m.attn.wq,        m.fusions[0].w,
                                m.encoder.b3,   m.head_b,         m.down_b[1]};
    for (ad::Var p : probes) {
        Tensor num = dragsplat::testing::numeric_grad(build, p, 1e-5);
        CHECK(dragsplat::testing::max_rel_err(p->g(), num) < 1e-3);
    }
}

TEST_CASE("checkpoint round trip is bit-identical and keeps the stage tag") {
    NetConfig c = tiny_config();
    Backbone m = Backbone::init(c);
    Tensor in = random_input(c, 11);
    Tensor ref = m.forward(in, two_drags())->val;

    save_checkpoint("ckpt_rt.bin", m, "stage1");
    std::string stage;
    Backbone r = load_checkpoint("ckpt_rt.bin", &stage);
    CHECK(stage == "stage1");
    CHECK(r.cfg.hash() == c.hash());
    CHECK((r.forward(in, two_drags())->val.d - ref.d).abs().maxCoeff() == 0.0);
    std::remove("ckpt_rt.bin");

    std::ofstream("ckpt_bad.bin") << "not a checkpoint";
    CHECK_THROWS(load_checkpoint("ckpt_bad.bin"));
    std::remove("ckpt_bad.bin");
    CHECK_THROWS(load_checkpoint("ckpt_missing.bin"));
}

TEST_CASE("adam reduces a quadratic and cosine schedule decays") {
    ad::Var p = ad::param(Tensor::full({4}, 2.0));
    optim::Adam opt({p}, 0.05);
    for (int i = 0; i < 400; ++i) {
        ad::Var loss = ad::sum_sq_diff(p, ad::constant(Tensor::full({4}, 0.5)));
        ad::backward(loss);
        opt.step();
    }
    CHECK((p->val.d - 0.5).abs().maxCoeff() < 1e-2);

    CHECK(optim::cosine_lr(1.0, 0, 100) == doctest::Approx(1.0));
    CHECK(optim::cosine_lr(1.0, 50, 100) == doctest::Approx(0.5));
    CHECK(optim::cosine_lr(1.0, 100, 100) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("make_input packs rgba and unit ray directions") {
    auto asset = assets::make_asset("drawer", 3);
    auto stage = assets::pose_stage(asset, 0, 0.5);
    auto rig = assets::view_rig(16);
    std::vector<assets::ViewRender> views;
    for (int v : {0, 3, 6, 9}) views.push_back(assets::render_mesh(stage, 0, rig[v]));

    Tensor in = make_input(views);
    REQUIRE(in.shape == std::vector<int>{4, 10, 16, 16});
    for (long p = 0; p < 16 * 16; ++p)
        CHECK(in.d[p] == views[0].rgba.d[p * 4]);  // view 0, red channel
    for (long p = 0; p < 16 * 16; ++p) {
        Eigen::Vector3d d(in.d[7 * 256 + p], in.d[8 * 256 + p], in.d[9 * 256 + p]);
        CHECK(std::abs(d.norm() - 1.0) < 1e-12);
    }
    CHECK_THROWS(make_input({}));
}

TEST_CASE("untrained prediction pipeline composes end to end") {
    auto asset = assets::make_asset("drawer", 6);
    auto stage = assets::pose_stage(asset, 0, 0.4);
    auto rig = assets::view_rig(16);
    std::vector<assets::ViewRender> views;
    for (int v : {0, 3, 6, 9}) views.push_back(assets::render_mesh(stage, 0, rig[v]));

    auto sampled = dragkit::sample_drags(asset, 0, 0.4, 0.8, rig[0], 64, 2);
    dragkit::Drag drag = sampled.front();

    NetConfig c;
    c.input_res = 16;
    c.views = 4;
    c.stem_width = 4;
    c.widths = {4, 6, 8};
    c.seed = 2;
    Backbone m = Backbone::init(c);
    splat::GaussianSet pred = predict_next_state(m, views, drag, 6, 0);
    CHECK(pred.size() == 4 * 8 * 8);
    CHECK_NOTHROW(pred.validate());

    // renderable from the full rig
    for (const Camera& cam : rig) {
        Tensor img = raster::render(pred, cam);
        CHECK(img.shape == std::vector<int>{16, 16, 4});
    }

    dragkit::Drag unknown = drag;
    unknown.cls = -1;
    CHECK_THROWS(predict_next_state(m, views, unknown, 6, 0));
}

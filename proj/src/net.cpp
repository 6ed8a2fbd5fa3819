#include "dragsplat/net.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dragsplat::net {

namespace {

using nlohmann::json;

json config_json(const NetConfig& c) {
    return json{{"input_res", c.input_res}, {"views", c.views},
                {"stem_width", c.stem_width}, {"widths", c.widths},
                {"fuse_at", c.fuse_at}, {"seed", c.seed}};
}

NetConfig config_from_json(const json& j) {
    NetConfig c;
    c.input_res = j.at("input_res").get<int>();
    c.views = j.at("views").get<int>();
    c.stem_width = j.at("stem_width").get<int>();
    c.widths = j.at("widths").get<std::vector<int>>();
    c.fuse_at = j.at("fuse_at").get<std::vector<int>>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

struct ParamInit {
    std::mt19937_64 rng;
    explicit ParamInit(uint64_t seed) : rng(seed) {}

    ad::Var conv(int co, int ci, int k) {
        std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (ci * k * k)));
        Tensor t({co, ci, k, k});
        for (long i = 0; i < t.numel(); ++i) t.d[i] = g(rng);
        return ad::param(t);
    }
    ad::Var dense(int in, int out) {
        std::normal_distribution<double> g(0.0, std::sqrt(1.0 / in));
        Tensor t({in, out});
        for (long i = 0; i < t.numel(); ++i) t.d[i] = g(rng);
        return ad::param(t);
    }
    ad::Var bias(int n) { return ad::param(Tensor::zeros({n})); }
};

ad::Var res_block(const ad::Var& x, const ResBlock& b) {
    ad::Var y = ad::silu(ad::conv2d(x, b.w1, b.b1, 1, 1));
    return ad::add(x, ad::conv2d(y, b.w2, b.b2, 1, 1));
}

// Applies fn to each view of a [V, C, H, W] batch and re-stacks the results.
template <typename Fn>
ad::Var per_view(const ad::Var& x, int V, int C, int H, int W, Fn fn) {
    ad::Var flat = ad::reshape(x, {V, C * H * W});
    std::vector<ad::Var> outs;
    for (int v = 0; v < V; ++v) {
        ad::Var row = ad::slice_rows(flat, V, static_cast<long>(C) * H * W, v, v + 1);
        outs.push_back(ad::reshape(fn(ad::reshape(row, {C, H, W}), v), {1, C * H * W}));
    }
    return ad::reshape(ad::concat_rows(outs, static_cast<long>(C) * H * W), {V, C, H, W});
}

void write_tensor(std::ofstream& f, const Tensor& t) {
    int nd = static_cast<int>(t.shape.size());
    f.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
    f.write(reinterpret_cast<const char*>(t.shape.data()), nd * sizeof(int));
    f.write(reinterpret_cast<const char*>(t.d.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& f) {
    int nd = 0;
    f.read(reinterpret_cast<char*>(&nd), sizeof(nd));
    if (nd <= 0 || nd > 8) throw std::runtime_error("checkpoint: corrupt tensor header");
    std::vector<int> shape(static_cast<size_t>(nd));
    f.read(reinterpret_cast<char*>(shape.data()), nd * sizeof(int));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.d.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    return t;
}

}  // namespace

void NetConfig::validate() const {
    if (views < 1) throw std::invalid_argument("NetConfig: need at least one view");
    if (widths.size() != 3) throw std::invalid_argument("NetConfig: expected 3 encoder widths");
    if (input_res < 8 || input_res % 8 != 0)
        throw std::invalid_argument("NetConfig: input_res must be a positive multiple of 8");
    for (size_t i = 0; i < fuse_at.size(); ++i) {
        if (fuse_at[i] < 0 || fuse_at[i] > 2)
            throw std::invalid_argument("NetConfig: fuse_at levels must be in [0, 2]");
        if (i > 0 && fuse_at[i] <= fuse_at[i - 1])
            throw std::invalid_argument("NetConfig: fuse_at must be strictly increasing");
    }
    if (stem_width <= 0) throw std::invalid_argument("NetConfig: non-positive stem width");
    for (int w : widths)
        if (w <= 0) throw std::invalid_argument("NetConfig: non-positive width");
}

std::string NetConfig::hash() const {
    std::string s = config_json(*this).dump();
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Backbone Backbone::init(const NetConfig& cfg) {
    cfg.validate();
    ParamInit pi(cfg.seed * 0x2545f4914f6cdd1dULL + 1);
    Backbone m;
    m.cfg = cfg;
    m.stem_w = pi.conv(cfg.stem_width, 10, 3);
    m.stem_b = pi.bias(cfg.stem_width);
    int prev = cfg.stem_width;
    for (int l = 0; l < 3; ++l) {
        int w = cfg.widths[static_cast<size_t>(l)];
        m.down_w.push_back(pi.conv(w, prev, 3));
        m.down_b.push_back(pi.bias(w));
        m.enc_blocks.push_back({pi.conv(w, w, 3), pi.bias(w), pi.conv(w, w, 3), pi.bias(w)});
        prev = w;
    }
    m.encoder = embed::PointEncoder::init(cfg.seed * 31 + 7);
    for (int l : cfg.fuse_at)
        m.fusions.push_back(embed::FusionConv::init(cfg.widths[static_cast<size_t>(l)]));
    int c = cfg.widths[2];
    m.attn = {pi.dense(c, c), pi.dense(c, c), pi.dense(c, c), pi.dense(c, c)};
    m.mid = {pi.conv(c, c, 3), pi.bias(c), pi.conv(c, c, 3), pi.bias(c)};
    m.up_w = {pi.conv(cfg.widths[1], cfg.widths[2], 3), pi.conv(cfg.widths[0], cfg.widths[1], 3)};
    m.up_b = {pi.bias(cfg.widths[1]), pi.bias(cfg.widths[0])};
    m.head_w = pi.conv(splat::kChannels, cfg.widths[0], 3);
    m.head_b = pi.bias(splat::kChannels);
    return m;
}

std::vector<ad::Var> Backbone::params() const {
    std::vector<ad::Var> ps{stem_w, stem_b};
    for (size_t l = 0; l < down_w.size(); ++l) {
        ps.push_back(down_w[l]);
        ps.push_back(down_b[l]);
        ps.insert(ps.end(), {enc_blocks[l].w1, enc_blocks[l].b1, enc_blocks[l].w2, enc_blocks[l].b2});
    }
    for (const auto& p : encoder.params()) ps.push_back(p);
    for (const auto& f : fusions)
        for (const auto& p : f.params()) ps.push_back(p);
    ps.insert(ps.end(), {attn.wq, attn.wk, attn.wv, attn.wo});
    ps.insert(ps.end(), {mid.w1, mid.b1, mid.w2, mid.b2});
    for (size_t l = 0; l < up_w.size(); ++l) {
        ps.push_back(up_w[l]);
        ps.push_back(up_b[l]);
    }
    ps.push_back(head_w);
    ps.push_back(head_b);
    return ps;
}

ad::Var Backbone::forward(const Tensor& views_input, const std::vector<dragkit::Drag>& drags) const {
    const int V = cfg.views, R = cfg.input_res;
    if (views_input.shape != std::vector<int>{V, 10, R, R})
        throw std::invalid_argument("forward: expected input [" + std::to_string(V) + "x10x" +
                                    std::to_string(R) + "x" + std::to_string(R) + "], got " +
                                    shape_str(views_input.shape));
    for (const auto& d : drags) {
        d.validate();
        if (d.view != 0) throw std::invalid_argument("forward: drags must live on view 0");
    }

    ad::Var x = ad::silu(ad::conv2d(ad::constant(views_input), stem_w, stem_b, 1, 1));
    int res = R;
    for (int l = 0; l < 3; ++l) {
        res /= 2;
        int C = cfg.widths[static_cast<size_t>(l)];
        x = ad::silu(ad::conv2d(x, down_w[static_cast<size_t>(l)], down_b[static_cast<size_t>(l)], 2, 1));
        x = res_block(x, enc_blocks[static_cast<size_t>(l)]);
        auto it = std::find(cfg.fuse_at.begin(), cfg.fuse_at.end(), l);
        if (it != cfg.fuse_at.end()) {
            ad::Var map0 = embed::build_drag_map(encoder, drags, res, res);
            ad::Var zero = ad::constant(Tensor::zeros({embed::kMapChannels, res, res}));
            const embed::FusionConv& fc = fusions[static_cast<size_t>(it - cfg.fuse_at.begin())];
            x = per_view(x, V, C, res, res, [&](const ad::Var& xv, int v) {
                return embed::fuse(xv, v == 0 ? map0 : zero, fc);
            });
        }
    }

    // self-attention over every view's bottleneck tokens
    const int C = cfg.widths[2];
    const long n = static_cast<long>(V) * res * res;
    ad::Var flat = ad::reshape(x, {V, C * res * res});
    std::vector<ad::Var> toks;
    for (int v = 0; v < V; ++v)
        toks.push_back(ad::chw_to_tokens(
            ad::reshape(ad::slice_rows(flat, V, static_cast<long>(C) * res * res, v, v + 1),
                        {C, res, res})));
    ad::Var t = ad::concat_rows(toks, C);
    ad::Var q = ad::matmul(t, n, C, attn.wq, C);
    ad::Var k = ad::matmul(t, n, C, attn.wk, C);
    ad::Var vv = ad::matmul(t, n, C, attn.wv, C);
    ad::Var scores = ad::scale(ad::matmul(q, n, C, ad::transpose(k, n, C), n), 1.0 / std::sqrt(C));
    ad::Var out = ad::matmul(ad::softmax_rows(scores, n, n), n, n, vv, C);
    t = ad::add(t, ad::matmul(out, n, C, attn.wo, C));
    std::vector<ad::Var> backs;
    for (int v = 0; v < V; ++v)
        backs.push_back(ad::reshape(
            ad::tokens_to_chw(ad::slice_rows(t, n, C, static_cast<long>(v) * res * res,
                                             static_cast<long>(v + 1) * res * res),
                              C, res, res),
            {1, C * res * res}));
    x = ad::reshape(ad::concat_rows(backs, static_cast<long>(C) * res * res), {V, C, res, res});
    x = res_block(x, mid);

    for (int l = 0; l < 2; ++l) {
        res *= 2;
        x = ad::silu(ad::conv2d(ad::upsample2_nearest(x), up_w[static_cast<size_t>(l)],
                                up_b[static_cast<size_t>(l)], 1, 1));
    }
    x = ad::conv2d(x, head_w, head_b, 1, 1);  // [V, 14, R/2, R/2]

    std::vector<ad::Var> hwc;
    ad::Var xf = ad::reshape(x, {V, splat::kChannels * res * res});
    for (int v = 0; v < V; ++v)
        hwc.push_back(ad::chw_to_tokens(
            ad::reshape(ad::slice_rows(xf, V, static_cast<long>(splat::kChannels) * res * res, v, v + 1),
                        {splat::kChannels, res, res})));
    return ad::reshape(ad::concat_rows(hwc, splat::kChannels), {V, res, res, splat::kChannels});
}

Tensor make_input(const std::vector<assets::ViewRender>& views) {
    if (views.empty()) throw std::invalid_argument("make_input: no views");
    const int R = views[0].camera.height;
    Tensor in({static_cast<int>(views.size()), 10, R, R});
    for (size_t v = 0; v < views.size(); ++v) {
        const auto& vr = views[v];
        if (vr.camera.height != R || vr.camera.width != R)
            throw std::invalid_argument("make_input: views must share a square resolution");
        if (vr.rgba.shape != std::vector<int>{R, R, 4})
            throw std::invalid_argument("make_input: view image is " + shape_str(vr.rgba.shape));
        Eigen::MatrixXd origins, dirs;
        splat::view_rays(vr.camera, origins, dirs);
        double* base = in.d.data() + static_cast<long>(v) * 10 * R * R;
        for (long p = 0; p < static_cast<long>(R) * R; ++p) {
            for (int c = 0; c < 4; ++c) base[c * static_cast<long>(R) * R + p] = vr.rgba.d[p * 4 + c];
            for (int c = 0; c < 3; ++c) {
                base[(4 + c) * static_cast<long>(R) * R + p] = origins(p, c);
                base[(7 + c) * static_cast<long>(R) * R + p] = dirs(p, c);
            }
        }
    }
    return in;
}

splat::GaussianSet predict_next_state(const Backbone& model,
                                      const std::vector<assets::ViewRender>& cond_views,
                                      const dragkit::Drag& drag, int n_drags, uint64_t seed) {
    if (static_cast<int>(cond_views.size()) != model.cfg.views)
        throw std::invalid_argument("predict_next_state: expected " +
                                    std::to_string(model.cfg.views) + " conditioning views");
    drag.validate();
    if (drag.view != 0) throw std::invalid_argument("predict_next_state: drag must be on view 0");

    const Camera& cam = cond_views[0].camera;
    int col = std::min(cam.width - 1, static_cast<int>(std::floor(drag.src.x() * cam.width)));
    int row = std::min(cam.height - 1, static_cast<int>(std::floor(drag.src.y() * cam.height)));
    auto mask = dragkit::part_mask(cond_views[0], row, col);
    auto drags = dragkit::propagate(drag, mask, cam.height, cam.width, n_drags, seed);

    ad::Var raw = model.forward(make_input(cond_views), drags);
    splat::SplatterImage si;
    si.values = raw->val;
    for (const auto& v : cond_views) {
        Camera half = v.camera;
        half.height /= 2;
        half.width /= 2;
        si.cameras.push_back(half);
    }
    return splat::merge(si);
}

void save_checkpoint(const std::string& path, const Backbone& model, const std::string& stage) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    json header{{"config", config_json(model.cfg)}, {"stage", stage}, {"hash", model.cfg.hash()}};
    std::string h = header.dump();
    const char magic[8] = {'d', 's', 'n', 'e', 't', '0', '0', '1'};
    f.write(magic, 8);
    uint64_t len = h.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& p : model.params()) write_tensor(f, p->val);
}

Backbone load_checkpoint(const std::string& path, std::string* stage) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "dsnet001") throw std::runtime_error("checkpoint: bad file " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string h(len, '\0');
    f.read(h.data(), static_cast<std::streamsize>(len));
    json header = json::parse(h);
    NetConfig cfg = config_from_json(header.at("config"));
    if (header.at("hash").get<std::string>() != cfg.hash())
        throw std::runtime_error("checkpoint: config hash mismatch in " + path);
    Backbone m = Backbone::init(cfg);
    for (auto& p : m.params()) {
        Tensor t = read_tensor(f);
        if (t.shape != p->val.shape)
            throw std::runtime_error("checkpoint: tensor shape mismatch in " + path);
        p->val = t;
    }
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
    if (stage) *stage = header.at("stage").get<std::string>();
    return m;
}

}  // namespace dragsplat::net

#include "dragsplat/embed.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dragsplat::embed {

namespace {

constexpr int kHidden = 64;
constexpr int kHalf = kMapChannels / 2;

ad::Var mlp_layer(const ad::Var& x, long in, long out, const ad::Var& w, const ad::Var& b) {
    return ad::add_row_bias(ad::matmul(x, 1, in, w, out), 1, out, b);
}

}  // namespace

Eigen::VectorXd fourier_embed(const Eigen::Vector2d& p) {
    if (!(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0))
        throw std::invalid_argument("fourier_embed: point outside [0,1]^2");
    Eigen::VectorXd e(4 * kFourierL);
    for (int c = 0; c < 2; ++c)
        for (int k = 0; k < kFourierL; ++k) {
            double arg = std::ldexp(M_PI, k) * p[c];
            e[c * 2 * kFourierL + 2 * k] = std::sin(arg);
            e[c * 2 * kFourierL + 2 * k + 1] = std::cos(arg);
        }
    return e;
}

PointEncoder PointEncoder::init(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto randn = [&](std::vector<int> shape, double stdev) {
        std::normal_distribution<double> g(0.0, stdev);
        Tensor t(shape);
        for (long i = 0; i < t.numel(); ++i) t.d[i] = g(rng);
        return ad::param(t);
    };
    PointEncoder e;
    e.w1 = randn({4 * kFourierL, kHidden}, std::sqrt(2.0 / (4 * kFourierL)));
    e.b1 = ad::param(Tensor::zeros({kHidden}));
    e.w2 = randn({kHidden, kHidden}, std::sqrt(2.0 / kHidden));
    e.b2 = ad::param(Tensor::zeros({kHidden}));
    e.w3 = randn({kHidden, kHalf}, std::sqrt(2.0 / kHidden));
    e.b3 = ad::param(Tensor::zeros({kHalf}));
    return e;
}

std::vector<ad::Var> PointEncoder::params() const { return {w1, b1, w2, b2, w3, b3}; }

ad::Var PointEncoder::encode(const Eigen::Vector2d& p) const {
    Eigen::VectorXd f = fourier_embed(p);
    Tensor in({1, 4 * kFourierL});
    in.d = f.array();
    ad::Var x = ad::constant(in);
    x = ad::silu(mlp_layer(x, 4 * kFourierL, kHidden, w1, b1));
    x = ad::silu(mlp_layer(x, kHidden, kHidden, w2, b2));
    return mlp_layer(x, kHidden, kHalf, w3, b3);
}

ad::Var build_drag_map(const PointEncoder& enc, const std::vector<dragkit::Drag>& drags, int height,
                       int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("build_drag_map: non-positive size");
    if (drags.empty()) return ad::constant(Tensor::zeros({kMapChannels, height, width}));

    const long n = static_cast<long>(drags.size());
    std::vector<ad::Var> rows;
    Tensor place({height * width, static_cast<int>(n)});  // scatter matrix: pixel x drag
    for (long i = 0; i < n; ++i) {
        const dragkit::Drag& d = drags[static_cast<size_t>(i)];
        d.validate();
        int col = std::min(width - 1, static_cast<int>(std::floor(d.src.x() * width)));
        int row = std::min(height - 1, static_cast<int>(std::floor(d.src.y() * height)));
        place.d[(static_cast<long>(row) * width + col) * n + i] = 1.0;
        rows.push_back(ad::concat_rows({enc.encode(d.src), enc.encode(d.dst)}, kHalf));
    }
    // [n, C_M] per-drag embeddings scattered to pixels, then laid out as [C_M, H, W]
    ad::Var emb = ad::concat_rows(rows, kHalf);                       // [2n, kHalf]
    emb = ad::reshape(emb, {static_cast<int>(n), kMapChannels});      // src ++ dst per drag
    ad::Var map = ad::matmul(ad::constant(place), static_cast<long>(height) * width, n, emb,
                             kMapChannels);                           // [HW, C_M]
    map = ad::transpose(map, static_cast<long>(height) * width, kMapChannels);
    return ad::reshape(map, {kMapChannels, height, width});
}

FusionConv FusionConv::init(int channels) {
    if (channels <= 0) throw std::invalid_argument("FusionConv: non-positive channel count");
    FusionConv f;
    f.channels = channels;
    f.w = ad::param(Tensor::zeros({channels, channels + kMapChannels, 1, 1}));
    f.b = ad::param(Tensor::zeros({channels}));
    return f;
}

std::vector<ad::Var> FusionConv::params() const { return {w, b}; }

ad::Var fuse(const ad::Var& features, const ad::Var& drag_map, const FusionConv& conv) {
    const auto& fs = features->val.shape;
    const auto& ms = drag_map->val.shape;
    if (fs.size() != 3 || ms.size() != 3 || fs[1] != ms[1] || fs[2] != ms[2])
        throw std::invalid_argument("fuse: spatial mismatch between features " + shape_str(fs) +
                                    " and drag map " + shape_str(ms));
    if (fs[0] != conv.channels || ms[0] != kMapChannels)
        throw std::invalid_argument("fuse: channel mismatch");
    ad::Var x = ad::concat_channels({drag_map, features});
    x = ad::reshape(x, {1, fs[0] + ms[0], fs[1], fs[2]});
    ad::Var delta = ad::conv2d(x, conv.w, conv.b, 1, 0);
    return ad::add(features, ad::reshape(delta, fs));
}

}  // namespace dragsplat::embed

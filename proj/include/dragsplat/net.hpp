#pragma once

#include "dragsplat/assets.hpp"
#include "dragsplat/dragkit.hpp"
#include "dragsplat/embed.hpp"
#include "dragsplat/splat.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dragsplat::net {

struct NetConfig {
    int input_res = 64;                   // per-view input resolution (output is half)
    int views = 4;                        // conditioning views
    int stem_width = 16;                  // full-resolution width before downsampling
    std::vector<int> widths = {32, 64, 128};  // per-downsample-level widths
    std::vector<int> fuse_at = {0, 1, 2};  // downsample levels receiving drag fusion
    uint64_t seed = 0;

    void validate() const;
    std::string hash() const;  // stable hex digest of the serialized config
};

struct ResBlock {
    ad::Var w1, b1, w2, b2;
};

struct Attention {
    ad::Var wq, wk, wv, wo;
};

// Encoder-decoder over V views with residual blocks, per-level drag fusion,
// and self-attention across all views' bottleneck tokens. Input per view is
// 10 channels: RGBA + ray origin + ray direction. Output is a raw
// SplatterImage [V, R/2, R/2, 14].
struct Backbone {
    NetConfig cfg;
    ad::Var stem_w, stem_b;
    std::vector<ad::Var> down_w, down_b;
    std::vector<ResBlock> enc_blocks;
    embed::PointEncoder encoder;
    std::vector<embed::FusionConv> fusions;
    Attention attn;
    ResBlock mid;
    std::vector<ad::Var> up_w, up_b;
    ad::Var head_w, head_b;

    static Backbone init(const NetConfig& cfg);
    std::vector<ad::Var> params() const;

    // views_input: [V, 10, R, R]; drags live on view 0 (others get zero maps).
    ad::Var forward(const Tensor& views_input, const std::vector<dragkit::Drag>& drags) const;
};

// Packs rendered conditioning views into the backbone input [V, 10, R, R].
Tensor make_input(const std::vector<assets::ViewRender>& views);

// End-to-end inference: propagate the drag over its part mask, run the
// backbone on the conditioning views, and return the merged world-space
// Gaussians of the predicted next state.
splat::GaussianSet predict_next_state(const Backbone& model,
                                      const std::vector<assets::ViewRender>& cond_views,
                                      const dragkit::Drag& drag, int n_drags, uint64_t seed);

// Single-file checkpoint: JSON header (config, stage tag, config hash)
// followed by raw float64 tensors in parameter order.
void save_checkpoint(const std::string& path, const Backbone& model, const std::string& stage);
Backbone load_checkpoint(const std::string& path, std::string* stage = nullptr);

}  // namespace dragsplat::net

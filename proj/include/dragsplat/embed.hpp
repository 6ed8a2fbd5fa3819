#pragma once

#include "dragsplat/ad.hpp"
#include "dragsplat/dragkit.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dragsplat::embed {

inline constexpr int kFourierL = 8;   // frequency bands per coordinate
inline constexpr int kMapChannels = 32;  // C_M; each endpoint encodes to C_M / 2

// [sin(2^k pi x), cos(2^k pi x)] for k = 0..L-1, then the same for y;
// length 4L = 32. Throws for p outside [0,1]^2.
Eigen::VectorXd fourier_embed(const Eigen::Vector2d& p);

// Shared trainable 3-layer MLP 32 -> 64 -> 64 -> C_M/2 over fourier_embed(p).
struct PointEncoder {
    ad::Var w1, b1, w2, b2, w3, b3;

    static PointEncoder init(uint64_t seed);
    std::vector<ad::Var> params() const;
    ad::Var encode(const Eigen::Vector2d& p) const;  // [1, C_M/2]
};

// Sparse drag map [C_M, H, W]: encode(src) ++ encode(dst) written at pixel
// floor(src * (W, H)); drags whose sources coarsen to the same pixel sum.
// Zero drags give an all-zero constant map.
ad::Var build_drag_map(const PointEncoder& enc, const std::vector<dragkit::Drag>& drags, int height,
                       int width);

// 1x1 fusion convolution, zero-initialized so fusion starts as a no-op.
struct FusionConv {
    ad::Var w;  // [C, C + C_M, 1, 1]
    ad::Var b;  // [C]
    int channels = 0;

    static FusionConv init(int channels);
    std::vector<ad::Var> params() const;
};

// I = O + Conv(M ++ O) over channel concatenation; shapes [C, H, W] and
// [C_M, H, W] must agree spatially.
ad::Var fuse(const ad::Var& features, const ad::Var& drag_map, const FusionConv& conv);

}  // namespace dragsplat::embed

#pragma once

#include "dragsplat/ad.hpp"
#include "dragsplat/assets.hpp"
#include "dragsplat/camera.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dragsplat::dragkit {

// 2D drag on one rendered view; src/dst are (x, y) normalized to [0, 1]^2.
struct Drag {
    Eigen::Vector2d src{0, 0};
    Eigen::Vector2d dst{0, 0};
    int view = 0;
    int cls = -1;  // -1 unknown, 0 translation, 1 rotation
    bool clipped = false;

    Eigen::Vector2d delta() const { return dst - src; }
    void validate() const;
};

// Occlusion slack for projected-depth vs depth-map comparison: 2% of the
// unit-box scene diagonal.
inline constexpr double kEpsOcc = 0.02 * 1.7320508075688772;

// Samples k points uniformly on the moving part's surface at state q_t,
// projects them at q_t and q_next into `camera`, and keeps only points whose
// projected depth matches the rendered depth map within eps_occ (and whose
// pixel belongs to the part). Throws if nothing survives.
std::vector<Drag> sample_drags(const assets::ArticulatedAsset& asset, int part, double q_t,
                               double q_next, const Camera& camera, int k, uint64_t seed,
                               double eps_occ = kEpsOcc);

// Binary mask (H*W) of the part containing the query pixel; throws if the
// pixel is background or static body.
std::vector<uint8_t> part_mask(const assets::ViewRender& view, int row, int col);

// Rule-based propagation of one drag to n drags with sources sampled
// uniformly (seeded) from the mask. Translation copies the displacement;
// rotation scales it by 1 - <delta, src_i - src> / max_j <delta, src_j - src>
// with the max over the sampled sources plus the input source (falling back
// to translation when the max is <= 1e-9). Out-of-bounds destinations are
// clipped and flagged.
std::vector<Drag> propagate_translation(const Drag& a, const std::vector<uint8_t>& mask, int height,
                                        int width, int n, uint64_t seed);
std::vector<Drag> propagate_rotation(const Drag& a, const std::vector<uint8_t>& mask, int height,
                                     int width, int n, uint64_t seed);

// Routes to the rotation or translation rule by drag class.
std::vector<Drag> propagate(const Drag& a, const std::vector<uint8_t>& mask, int height, int width,
                            int n, uint64_t seed);

// Single-channel drag rasterization: the src->dst segment drawn into an
// [1, 1, H, W] map with intensity ramping 0 -> 1 along the segment.
Tensor drag_channel(const Drag& a, int height, int width);

// Small CNN over (RGBA image, drag channel) emitting a 2-way motion-type
// label. classify() refuses to run before training / loading weights.
struct DragClassifier {
    ad::Var w1, b1, w2, b2, w3, b3;
    int res = 0;  // input resolution the conv/pool stack was built for
    bool trained = false;

    static DragClassifier init(int resolution, uint64_t seed);
    std::vector<ad::Var> params() const;
    // image: [H, W, 4] in [0,1]; returns [1, 2] logits (translation, rotation).
    ad::Var logits(const Tensor& image, const Drag& a) const;
    int classify(const Tensor& image, const Drag& a) const;

    void save(const std::string& path) const;
    static DragClassifier load(const std::string& path);
};

}  // namespace dragsplat::dragkit

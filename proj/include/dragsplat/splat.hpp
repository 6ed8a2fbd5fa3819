#pragma once

#include "dragsplat/ad.hpp"
#include "dragsplat/camera.hpp"
#include "dragsplat/tensor.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dragsplat::splat {

// Raw per-pixel Gaussian parameters. Channel order:
//   position offset (3), raw scale (3), raw quaternion (4), raw opacity (1), color (3).
inline constexpr int kChannels = 14;

struct SplatterImage {
    Tensor values;  // [V, H, W, 14]
    std::vector<Camera> cameras;

    int views() const { return values.dim(0); }
    int height() const { return values.dim(1); }
    int width() const { return values.dim(2); }

    void validate() const;
};

// Activated world-space Gaussians. One row per Gaussian.
struct GaussianSet {
    Eigen::MatrixXd centers;    // N x 3
    Eigen::MatrixXd scales;     // N x 3, positive
    Eigen::MatrixXd rotations;  // N x 4 unit quaternions (w, x, y, z)
    Eigen::VectorXd opacities;  // N, in [0, 1]
    Eigen::MatrixXd colors;     // N x 3, in [0, 1]

    long size() const { return centers.rows(); }
    void validate() const;
};

// Activation constants. The anchor sits at depth 1.0 along each pixel ray and
// raw offsets are scaled by 0.5 before being added.
inline constexpr double kAnchorDepth = 1.0;
inline constexpr double kOffsetScale = 0.5;
inline constexpr double kScaleMin = 1e-4;
inline constexpr double kScaleMax = 1.0;
inline constexpr double kQuatEps = 1e-12;

// Per-pixel ray anchors for one view, flattened row-major to [H*W, 3] and [H*W, 3] dirs.
void view_rays(const Camera& cam, Eigen::MatrixXd& origins, Eigen::MatrixXd& dirs);

GaussianSet activate(const SplatterImage& raw);
GaussianSet merge(const SplatterImage& views);  // activate + concatenate all views

double match_loss(const SplatterImage& student, const SplatterImage& teacher);

// Autodiff variants. raw is a Var holding [V,H,W,14].
struct GaussianVars {
    ad::Var centers;    // [N,3]
    ad::Var scales;     // [N,3]
    ad::Var rotations;  // [N,4] normalized
    ad::Var opacities;  // [N,1]
    ad::Var colors;     // [N,3]
};

GaussianVars activate_ad(const ad::Var& raw, const std::vector<Camera>& cameras);
ad::Var match_loss_ad(const ad::Var& student, const SplatterImage& teacher);

// Inverse activation maps (used for surface initialization and round-trip checks).
double inv_softplus(double y);
double logit(double p);

// Binary container of little-endian float32 values plus a JSON sidecar
// (<path>.bin / <path>.json) recording shape, channel order, and cameras.
void save(const SplatterImage& img, const std::string& path);
SplatterImage load(const std::string& path);

}  // namespace dragsplat::splat

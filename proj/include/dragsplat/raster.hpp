#pragma once

#include "dragsplat/ad.hpp"
#include "dragsplat/camera.hpp"
#include "dragsplat/splat.hpp"
#include "dragsplat/tensor.hpp"

#include <limits>

namespace dragsplat::raster {

struct RenderOptions {
    double lowpass = 0.3;            // px^2 added to projected covariance diagonal
    double tmin = 1e-4;              // terminate compositing below this transmittance
    double alpha_max = 0.999;
    double alpha_min = 1.0 / 8192;   // skip contributions below this alpha
    double cull_sigma = 3.5;         // footprint radius in projected sigmas; <= 0: no culling
    double znear = 0.01;

    // Smooth everywhere except depth-sort ties; used by gradient checks.
    static RenderOptions exact() {
        RenderOptions o;
        o.tmin = 0.0;
        o.alpha_min = 0.0;
        o.cull_sigma = 0.0;
        return o;
    }
};

// Front-to-back EWA splatting over a black background. Output [H,W,4] RGBA in [0,1].
Tensor render(const splat::GaussianSet& g, const Camera& cam, const RenderOptions& opt = {});

struct GaussianGrads {
    Eigen::MatrixXd centers;    // N x 3
    Eigen::MatrixXd scales;     // N x 3
    Eigen::MatrixXd rotations;  // N x 4
    Eigen::VectorXd opacities;  // N
    Eigen::MatrixXd colors;     // N x 3

    explicit GaussianGrads(long n)
        : centers(Eigen::MatrixXd::Zero(n, 3)),
          scales(Eigen::MatrixXd::Zero(n, 3)),
          rotations(Eigen::MatrixXd::Zero(n, 4)),
          opacities(Eigen::VectorXd::Zero(n)),
          colors(Eigen::MatrixXd::Zero(n, 3)) {}
};

// Accumulates dL/d(params) given dL/d(image). Same traversal as render.
void render_backward(const splat::GaussianSet& g, const Camera& cam, const RenderOptions& opt,
                     const Tensor& grad_image, GaussianGrads& out);

// Autodiff wrapper around render/render_backward.
ad::Var render_ad(const splat::GaussianVars& g, const Camera& cam, const RenderOptions& opt = {});

// MSE(color) + lambda1 * pyramid proxy(color) + lambda2 * MSE(alpha).
// The proxy is the sum of MSEs between 2x/4x/8x average-pooled color pyramids.
double photometric_loss(const Tensor& pred, const Tensor& gt, double lambda1, double lambda2);
ad::Var photometric_loss_ad(const ad::Var& pred, const Tensor& gt, double lambda1, double lambda2);

}  // namespace dragsplat::raster

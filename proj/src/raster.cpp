#include "dragsplat/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dragsplat::raster {

namespace {

Eigen::Matrix3d quat_to_rot(const Eigen::RowVector4d& q) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

// dL/dq from dL/dR for the (non-normalizing) polynomial map q -> R.
Eigen::RowVector4d rot_grad_to_quat(const Eigen::Matrix3d& G, const Eigen::RowVector4d& q) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::RowVector4d g;
    g[0] = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) + x * G(2, 1));
    g[1] = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) +
                z * G(2, 0) + w * G(2, 1) - 2 * x * G(2, 2));
    g[2] = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) -
                w * G(2, 0) + z * G(2, 1) - 2 * y * G(2, 2));
    g[3] = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) +
                y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
    return g;
}

struct Projected {
    bool valid = false;
    Eigen::Vector3d m;        // camera-space center
    Eigen::Vector2d mean2d;   // pixel coords
    Eigen::Matrix2d cov2d;    // after low-pass
    Eigen::Matrix2d conic;    // cov2d^{-1}
    Eigen::Matrix<double, 2, 3> J;
    Eigen::Matrix3d cov_cam;  // camera-space 3D covariance
    double dist = 0.0;        // sort key: |center - camera position|
    int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // pixel bbox [r0,r1) x [c0,c1)
};

void project_all(const splat::GaussianSet& g, const Camera& cam, const RenderOptions& opt,
                 std::vector<Projected>& out) {
    const long n = g.size();
    const int H = cam.height, W = cam.width;
    const Eigen::Matrix3d R = cam.rotation();
    const double f = cam.focal();
    out.assign(static_cast<size_t>(n), Projected{});
    for (long i = 0; i < n; ++i) {
        Projected& pr = out[static_cast<size_t>(i)];
        Eigen::Vector3d mu = g.centers.row(i);
        pr.m = R * (mu - cam.position);
        if (pr.m.z() <= opt.znear) continue;  // behind camera: skipped, not an error
        pr.dist = (mu - cam.position).norm();
        const double x = pr.m.x(), y = pr.m.y(), z = pr.m.z();
        pr.mean2d = {f * x / z + cam.cx(), f * y / z + cam.cy()};
        pr.J << f / z, 0, -f * x / (z * z), 0, f / z, -f * y / (z * z);
        Eigen::Matrix3d Rq = quat_to_rot(g.rotations.row(i));
        Eigen::Matrix3d M = Rq * g.scales.row(i).asDiagonal();
        pr.cov_cam = R * (M * M.transpose()) * R.transpose();
        pr.cov2d = pr.J * pr.cov_cam * pr.J.transpose();
        pr.cov2d(0, 0) += opt.lowpass;
        pr.cov2d(1, 1) += opt.lowpass;
        const double det = pr.cov2d.determinant();
        if (det <= 0.0) continue;
        pr.conic = pr.cov2d.inverse();
        if (opt.cull_sigma > 0.0) {
            double eig_max = 0.5 * (pr.cov2d.trace() +
                                    std::sqrt(std::max(0.0, pr.cov2d.trace() * pr.cov2d.trace() -
                                                                4.0 * det)));
            double r = opt.cull_sigma * std::sqrt(eig_max);
            pr.c0 = std::max(0, static_cast<int>(std::floor(pr.mean2d.x() - r)));
            pr.c1 = std::min(W, static_cast<int>(std::ceil(pr.mean2d.x() + r)) + 1);
            pr.r0 = std::max(0, static_cast<int>(std::floor(pr.mean2d.y() - r)));
            pr.r1 = std::min(H, static_cast<int>(std::ceil(pr.mean2d.y() + r)) + 1);
            if (pr.r0 >= pr.r1 || pr.c0 >= pr.c1) continue;
        } else {
            pr.r0 = 0;
            pr.r1 = H;
            pr.c0 = 0;
            pr.c1 = W;
        }
        pr.valid = true;
    }
}

// Per-pixel lists of contributing Gaussians, already in front-to-back order.
void bin_by_pixel(const std::vector<Projected>& prj, int H, int W,
                  std::vector<std::vector<int>>& lists) {
    std::vector<int> order;
    order.reserve(prj.size());
    for (size_t i = 0; i < prj.size(); ++i)
        if (prj[i].valid) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return prj[static_cast<size_t>(a)].dist < prj[static_cast<size_t>(b)].dist; });
    lists.assign(static_cast<size_t>(H) * W, {});
    for (int idx : order) {
        const Projected& p = prj[static_cast<size_t>(idx)];
        for (int r = p.r0; r < p.r1; ++r)
            for (int c = p.c0; c < p.c1; ++c) lists[static_cast<size_t>(r) * W + c].push_back(idx);
    }
}

struct Contribution {
    int idx;
    double alpha;
    double gweight;  // exp term before opacity
    bool clamped;
    Eigen::Vector2d d;  // pixel - mean2d
};

}  // namespace

Tensor render(const splat::GaussianSet& g, const Camera& cam, const RenderOptions& opt) {
    cam.validate();
    const int H = cam.height, W = cam.width;
    Tensor img({H, W, 4});
    if (g.size() == 0) return img;

    std::vector<Projected> prj;
    project_all(g, cam, opt, prj);
    std::vector<std::vector<int>> lists;
    bin_by_pixel(prj, H, W, lists);

    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double T = 1.0;
            double acc[4] = {0, 0, 0, 0};
            for (int idx : lists[static_cast<size_t>(r) * W + c]) {
                const Projected& p = prj[static_cast<size_t>(idx)];
                Eigen::Vector2d d(c - p.mean2d.x(), r - p.mean2d.y());
                double e = -0.5 * d.dot(p.conic * d);
                if (e < -30.0) continue;
                double gw = std::exp(e);
                double alpha = std::min(g.opacities[idx] * gw, opt.alpha_max);
                if (alpha < opt.alpha_min) continue;
                for (int k = 0; k < 3; ++k) acc[k] += T * alpha * g.colors(idx, k);
                acc[3] += T * alpha;
                T *= 1.0 - alpha;
                if (T < opt.tmin) break;
            }
            double* px = img.d.data() + (static_cast<long>(r) * W + c) * 4;
            for (int k = 0; k < 4; ++k) px[k] = acc[k];
        }
    }
    return img;
}

void render_backward(const splat::GaussianSet& g, const Camera& cam, const RenderOptions& opt,
                     const Tensor& grad_image, GaussianGrads& out) {
    const int H = cam.height, W = cam.width;
    const long n = g.size();
    if (n == 0) return;
    if (grad_image.ndim() != 3 || grad_image.dim(0) != H || grad_image.dim(1) != W ||
        grad_image.dim(2) != 4)
        throw std::invalid_argument("render_backward: grad image shape mismatch");

    std::vector<Projected> prj;
    project_all(g, cam, opt, prj);
    std::vector<std::vector<int>> lists;
    bin_by_pixel(prj, H, W, lists);

    // 2D-space accumulators per Gaussian.
    Eigen::MatrixXd g_mean2d = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd g_conic = Eigen::MatrixXd::Zero(n, 3);  // (qa, qb, qc) with weight exp(-0.5(qa dx^2 + 2 qb dx dy + qc dy^2))

    std::vector<Contribution> contribs;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const auto& lst = lists[static_cast<size_t>(r) * W + c];
            if (lst.empty()) continue;
            const double* gpx = grad_image.d.data() + (static_cast<long>(r) * W + c) * 4;
            if (gpx[0] == 0 && gpx[1] == 0 && gpx[2] == 0 && gpx[3] == 0) continue;

            contribs.clear();
            double T = 1.0;
            for (int idx : lst) {
                const Projected& p = prj[static_cast<size_t>(idx)];
                Eigen::Vector2d d(c - p.mean2d.x(), r - p.mean2d.y());
                double e = -0.5 * d.dot(p.conic * d);
                if (e < -30.0) continue;
                double gw = std::exp(e);
                double raw_alpha = g.opacities[idx] * gw;
                bool clamped = raw_alpha > opt.alpha_max;
                double alpha = clamped ? opt.alpha_max : raw_alpha;
                if (alpha < opt.alpha_min) continue;
                contribs.push_back({idx, alpha, gw, clamped, d});
                T *= 1.0 - alpha;
                if (T < opt.tmin) break;
            }

            // Reverse pass with suffix sums: C = sum_i T_i alpha_i c_i,
            // dC/dalpha_i = T_i c_i - S_i / (1 - alpha_i), S_i the suffix behind i.
            double suffix[4] = {0, 0, 0, 0};
            for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                // Recover T_i (transmittance in front of i) by dividing out what's behind.
                T /= (1.0 - it->alpha);  // now T == T_i
                const int idx = it->idx;
                double col[4] = {g.colors(idx, 0), g.colors(idx, 1), g.colors(idx, 2), 1.0};
                double dL_dalpha = 0.0;
                for (int k = 0; k < 4; ++k) {
                    double dC_dalpha = T * col[k] - suffix[k] / (1.0 - it->alpha);
                    dL_dalpha += gpx[k] * dC_dalpha;
                    suffix[k] += T * it->alpha * col[k];
                }
                for (int k = 0; k < 3; ++k) out.colors(idx, k) += gpx[k] * T * it->alpha;
                if (it->clamped) continue;  // alpha clamp: zero gradient into opacity/footprint
                out.opacities[idx] += dL_dalpha * it->gweight;
                double dL_dgw = dL_dalpha * g.opacities[idx];
                const Projected& p = prj[static_cast<size_t>(idx)];
                Eigen::Vector2d qd = p.conic * it->d;
                // d = pixel - mean2d, so dG/dmean = G * (conic d)
                g_mean2d(idx, 0) += dL_dgw * it->gweight * qd.x();
                g_mean2d(idx, 1) += dL_dgw * it->gweight * qd.y();
                g_conic(idx, 0) += dL_dgw * it->gweight * (-0.5 * it->d.x() * it->d.x());
                g_conic(idx, 1) += dL_dgw * it->gweight * (-it->d.x() * it->d.y());
                g_conic(idx, 2) += dL_dgw * it->gweight * (-0.5 * it->d.y() * it->d.y());
            }
        }
    }

    // Chain 2D gradients back to 3D parameters.
    const Eigen::Matrix3d R = cam.rotation();
    const double f = cam.focal();
    for (long i = 0; i < n; ++i) {
        const Projected& p = prj[static_cast<size_t>(i)];
        if (!p.valid) continue;
        bool touched = g_mean2d.row(i).cwiseAbs().sum() != 0.0 ||
                       g_conic.row(i).cwiseAbs().sum() != 0.0 ||
                       out.colors.row(i).cwiseAbs().sum() != 0.0 || out.opacities[i] != 0.0;
        if (!touched) continue;

        Eigen::Matrix2d dL_dQ;
        dL_dQ << g_conic(i, 0), 0.5 * g_conic(i, 1), 0.5 * g_conic(i, 1), g_conic(i, 2);
        Eigen::Matrix2d dL_dcov2d = -p.conic * dL_dQ * p.conic;

        Eigen::Matrix3d dL_dcov_cam = p.J.transpose() * dL_dcov2d * p.J;
        Eigen::Matrix<double, 2, 3> dL_dJ = 2.0 * dL_dcov2d * p.J * p.cov_cam;

        const double x = p.m.x(), y = p.m.y(), z = p.m.z();
        Eigen::Vector3d dL_dm = Eigen::Vector3d::Zero();
        // mean2d = (f x / z + cx, f y / z + cy)
        dL_dm.x() += g_mean2d(i, 0) * f / z;
        dL_dm.y() += g_mean2d(i, 1) * f / z;
        dL_dm.z() += -f * (g_mean2d(i, 0) * x + g_mean2d(i, 1) * y) / (z * z);
        // J entries: J00 = J11 = f/z, J02 = -f x / z^2, J12 = -f y / z^2
        dL_dm.x() += dL_dJ(0, 2) * (-f / (z * z));
        dL_dm.y() += dL_dJ(1, 2) * (-f / (z * z));
        dL_dm.z() += (dL_dJ(0, 0) + dL_dJ(1, 1)) * (-f / (z * z)) +
                     dL_dJ(0, 2) * (2 * f * x / (z * z * z)) +
                     dL_dJ(1, 2) * (2 * f * y / (z * z * z));
        out.centers.row(i) += (R.transpose() * dL_dm).transpose();

        Eigen::Matrix3d dL_dcov_w = R.transpose() * dL_dcov_cam * R;
        Eigen::Matrix3d Rq = quat_to_rot(g.rotations.row(i));
        Eigen::Matrix3d M = Rq * g.scales.row(i).asDiagonal();
        Eigen::Matrix3d dL_dM = (dL_dcov_w + dL_dcov_w.transpose()) * M;
        for (int k = 0; k < 3; ++k)
            out.scales(i, k) += dL_dM.col(k).dot(Rq.col(k));
        Eigen::Matrix3d dL_dRq = dL_dM * g.scales.row(i).asDiagonal();
        out.rotations.row(i) += rot_grad_to_quat(dL_dRq, g.rotations.row(i));
    }
}

ad::Var render_ad(const splat::GaussianVars& gv, const Camera& cam, const RenderOptions& opt) {
    splat::GaussianSet g;
    const long n = gv.centers->val.numel() / 3;
    g.centers = gv.centers->val.mat(n, 3);
    g.scales = gv.scales->val.mat(n, 3);
    g.rotations = gv.rotations->val.mat(n, 4);
    g.opacities = gv.opacities->val.mat(n, 1).col(0);
    g.colors = gv.colors->val.mat(n, 3);

    Tensor img = render(g, cam, opt);
    auto node = std::make_shared<ad::Node>();
    node->val = std::move(img);
    node->parents = {gv.centers, gv.scales, gv.rotations, gv.opacities, gv.colors};
    for (const auto& p : node->parents)
        if (p->requires_grad) node->requires_grad = true;
    if (!node->requires_grad) return node;

    auto centers = gv.centers, scales = gv.scales, rots = gv.rotations, opac = gv.opacities,
         cols = gv.colors;
    node->back = [g = std::move(g), cam, opt, centers, scales, rots, opac, cols](ad::Node& nd) {
        GaussianGrads grads(g.size());
        render_backward(g, cam, opt, nd.g(), grads);
        const long n = g.size();
        if (centers->requires_grad) centers->g().mat(n, 3) += grads.centers;
        if (scales->requires_grad) scales->g().mat(n, 3) += grads.scales;
        if (rots->requires_grad) rots->g().mat(n, 4) += grads.rotations;
        if (opac->requires_grad) opac->g().mat(n, 1).col(0) += grads.opacities;
        if (cols->requires_grad) cols->g().mat(n, 3) += grads.colors;
    };
    return node;
}

namespace {

void check_rgba(const std::vector<int>& a, const std::vector<int>& b) {
    if (a != b)
        throw std::invalid_argument("photometric_loss: shape mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
    if (a.size() != 3 || a[2] != 4)
        throw std::invalid_argument("photometric_loss: expected [H,W,4], got " + shape_str(a));
}

// Up to three pyramid levels; stops early when the spatial size stops halving evenly.
ad::Var rgb_pyramid_loss(const ad::Var& pred_rgb_chw, const Tensor& gt_rgb_chw) {
    ad::Var loss;
    ad::Var p = pred_rgb_chw;
    ad::Var q = ad::constant(gt_rgb_chw);
    for (int level = 0; level < 3; ++level) {
        if (p->val.dim(2) % 2 != 0 || p->val.dim(3) % 2 != 0 || p->val.dim(2) < 2 ||
            p->val.dim(3) < 2)
            break;
        p = ad::avg_pool2d(p, 2);
        q = ad::avg_pool2d(q, 2);
        ad::Var term = ad::mse(p, q);
        loss = loss ? ad::add(loss, term) : term;
    }
    return loss ? loss : ad::constant(Tensor::scalar(0.0));
}

}  // namespace

ad::Var photometric_loss_ad(const ad::Var& pred, const Tensor& gt, double lambda1, double lambda2) {
    check_rgba(pred->val.shape, gt.shape);
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::invalid_argument("photometric_loss: negative lambda");
    const int H = pred->val.dim(0), W = pred->val.dim(1);
    const long npx = static_cast<long>(H) * W;

    ad::Var rows = ad::reshape(pred, {static_cast<int>(npx), 4});
    ad::Var pred_rgb = ad::slice_cols(rows, npx, 4, 0, 3);
    ad::Var pred_a = ad::slice_cols(rows, npx, 4, 3, 4);

    Tensor gt_rgb({static_cast<int>(npx), 3}), gt_a({static_cast<int>(npx), 1});
    for (long p = 0; p < npx; ++p) {
        for (int k = 0; k < 3; ++k) gt_rgb.d[p * 3 + k] = gt.d[p * 4 + k];
        gt_a.d[p] = gt.d[p * 4 + 3];
    }

    ad::Var loss = ad::mse(pred_rgb, ad::constant(gt_rgb));
    if (lambda2 > 0.0)
        loss = ad::add(loss, ad::scale(ad::mse(pred_a, ad::constant(std::move(gt_a))), lambda2));
    if (lambda1 > 0.0) {
        ad::Var pred_chw =
            ad::reshape(ad::tokens_to_chw(pred_rgb, 3, H, W), {1, 3, H, W});
        Tensor gt_chw({1, 3, H, W});
        for (int ch = 0; ch < 3; ++ch)
            for (long p = 0; p < npx; ++p) gt_chw.d[ch * npx + p] = gt_rgb.d[p * 3 + ch];
        loss = ad::add(loss, ad::scale(rgb_pyramid_loss(pred_chw, gt_chw), lambda1));
    }
    return loss;
}

double photometric_loss(const Tensor& pred, const Tensor& gt, double lambda1, double lambda2) {
    return photometric_loss_ad(ad::constant(pred), gt, lambda1, lambda2)->val.d[0];
}

}  // namespace dragsplat::raster

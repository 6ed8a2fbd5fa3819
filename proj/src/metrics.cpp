#include "dragsplat/metrics.hpp"

#include "dragsplat/png_io.hpp"
#include "dragsplat/raster.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dragsplat::metrics {

using nlohmann::json;

namespace {

Tensor rgb_of(const Tensor& rgba) {
    const int H = rgba.dim(0), W = rgba.dim(1);
    Tensor rgb({H, W, 3});
    for (long p = 0; p < static_cast<long>(H) * W; ++p)
        for (int c = 0; c < 3; ++c) rgb.d[p * 3 + c] = rgba.d[p * 4 + c];
    return rgb;
}

std::vector<Camera> half_cameras(const dataset::StateSample& st) {
    std::vector<Camera> cams;
    for (int v : dataset::conditioning_views()) {
        Camera c = st.views[static_cast<size_t>(v)].camera;
        c.height /= 2;
        c.width /= 2;
        cams.push_back(c);
    }
    return cams;
}

std::vector<assets::ViewRender> cond_views(const dataset::StateSample& st) {
    std::vector<assets::ViewRender> out;
    for (int v : dataset::conditioning_views()) out.push_back(st.views[static_cast<size_t>(v)]);
    return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) throw std::invalid_argument("psnr: shape mismatch");
    if (a.numel() == 0) throw std::invalid_argument("psnr: empty tensors");
    double mse = (a.d - b.d).square().mean();
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape || a.shape.size() != 3)
        throw std::invalid_argument("ssim: need matching [H,W,C] tensors");
    const int H = a.dim(0), W = a.dim(1), C = a.dim(2);

    int win = 11;
    if (std::min(H, W) < win) {
        win = std::min(H, W);
        if (win % 2 == 0) --win;  // shrink to the largest odd fit
    }
    if (win < 3) throw std::invalid_argument("ssim: image too small");
    const int half = win / 2;

    std::vector<double> kernel(static_cast<size_t>(win) * win);
    double ksum = 0.0;
    for (int r = 0; r < win; ++r)
        for (int c = 0; c < win; ++c) {
            double dr = r - half, dc = c - half;
            double v = std::exp(-(dr * dr + dc * dc) / (2.0 * 1.5 * 1.5));
            kernel[static_cast<size_t>(r) * win + c] = v;
            ksum += v;
        }
    for (double& v : kernel) v /= ksum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int ch = 0; ch < C; ++ch)
        for (int r = half; r < H - half; ++r)
            for (int c = half; c < W - half; ++c) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int kr = 0; kr < win; ++kr)
                    for (int kc = 0; kc < win; ++kc) {
                        double w = kernel[static_cast<size_t>(kr) * win + kc];
                        long idx = (static_cast<long>(r - half + kr) * W + (c - half + kc)) * C + ch;
                        double x = a.d[idx], y = b.d[idx];
                        mx += w * x;
                        my += w * y;
                        mxx += w * x * x;
                        myy += w * y * y;
                        mxy += w * x * y;
                    }
                double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

JointEstimate estimate_joint(const Eigen::MatrixXd& pts_t, const Eigen::MatrixXd& pts_t1) {
    if (pts_t.rows() != pts_t1.rows() || pts_t.cols() != 3 || pts_t1.cols() != 3)
        throw std::invalid_argument("estimate_joint: need matching Nx3 point sets");
    const long n = pts_t.rows();
    if (n < 3) throw std::invalid_argument("estimate_joint: need at least 3 points");

    Eigen::RowVector3d cp = pts_t.colwise().mean(), cq = pts_t1.colwise().mean();
    Eigen::MatrixXd P = pts_t.rowwise() - cp, Q = pts_t1.rowwise() - cq;

    Eigen::JacobiSVD<Eigen::MatrixXd> shape_svd(P);
    const auto& sv = shape_svd.singularValues();
    if (sv(1) < 1e-9 * std::max(1.0, sv(0)))
        throw std::invalid_argument("estimate_joint: points are collinear");

    Eigen::Matrix3d H = P.transpose() * Q;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
    Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
    Eigen::Vector3d t = cq.transpose() - R * cp.transpose();

    Eigen::AngleAxisd aa(R);
    JointEstimate est;
    if (aa.angle() < kThetaMin) {
        est.type = assets::JointSpec::Type::prismatic;
        est.magnitude = t.norm();
        if (est.magnitude > 1e-12) est.axis = t / est.magnitude;
        return est;
    }
    est.type = assets::JointSpec::Type::revolute;
    est.axis = aa.axis();
    est.magnitude = aa.angle();
    // fixed point of x -> R x + t; (I - R) is singular along the axis, so take
    // the minimum-norm least-squares solution, which is orthogonal to it
    Eigen::Matrix3d A = Eigen::Matrix3d::Identity() - R;
    est.pivot = A.completeOrthogonalDecomposition().solve(t);
    return est;
}

EvalReport evaluate(const net::Backbone& model, const train::StateSet& states, int n_drags,
                    uint64_t seed, int max_pairs_per_asset) {
    if (states.empty()) throw std::invalid_argument("evaluate: empty state set");
    auto novel = dataset::novel_views();
    EvalReport rep;
    for (size_t a = 0; a < states.size(); ++a) {
        const auto& seq = states[a];
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < static_cast<int>(seq.size()); ++i)
            for (int j = 0; j < static_cast<int>(seq.size()); ++j)
                if (i != j) pairs.emplace_back(i, j);
        if (max_pairs_per_asset > 0 && static_cast<int>(pairs.size()) > max_pairs_per_asset) {
            std::mt19937_64 rng(seed + a);
            std::shuffle(pairs.begin(), pairs.end(), rng);
            pairs.resize(static_cast<size_t>(max_pairs_per_asset));
        }
        for (auto [i, j] : pairs) {
            const auto& from = seq[static_cast<size_t>(i)];
            const auto& to = seq[static_cast<size_t>(j)];
            uint64_t pair_seed = seed * 1000003ULL + a * 10007ULL +
                                 static_cast<uint64_t>(i) * 101ULL + static_cast<uint64_t>(j);
            auto drags = train::drags_for_pair(from, to, n_drags, pair_seed);
            ad::Var raw = model.forward(net::make_input(cond_views(from)), drags);
            splat::SplatterImage si;
            si.values = raw->val;
            si.cameras = half_cameras(from);
            splat::GaussianSet gs = splat::merge(si);
            for (int nv : novel) {
                const auto& gt = to.views[static_cast<size_t>(nv)];
                Tensor pred = rgb_of(raster::render(gs, gt.camera));
                Tensor gt_rgb = rgb_of(gt.rgba);
                EvalRow row;
                row.asset = from.asset_id;
                row.from = i;
                row.to = j;
                row.view = nv;
                row.psnr = psnr(pred, gt_rgb);
                row.ssim = ssim(pred, gt_rgb);
                row.baseline_psnr =
                    psnr(rgb_of(from.views[static_cast<size_t>(nv)].rgba), gt_rgb);
                rep.rows.push_back(std::move(row));
            }
        }
    }
    if (rep.rows.empty()) throw std::invalid_argument("evaluate: no stage pairs to score");
    for (const auto& r : rep.rows) {
        rep.mean_psnr += r.psnr;
        rep.mean_ssim += r.ssim;
        rep.baseline_mean_psnr += r.baseline_psnr;
    }
    const double n = static_cast<double>(rep.rows.size());
    rep.mean_psnr /= n;
    rep.mean_ssim /= n;
    rep.baseline_mean_psnr /= n;
    return rep;
}

void write_report(const EvalReport& rep, const std::string& csv_path,
                  const std::string& json_path) {
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        f << "asset,from,to,view,psnr,ssim,baseline_psnr\n";
        for (const auto& r : rep.rows)
            f << r.asset << "," << r.from << "," << r.to << "," << r.view << "," << r.psnr << ","
              << r.ssim << "," << r.baseline_psnr << "\n";
    }
    if (!json_path.empty()) {
        json rows = json::array();
        for (const auto& r : rep.rows)
            rows.push_back({{"asset", r.asset},
                            {"from", r.from},
                            {"to", r.to},
                            {"view", r.view},
                            {"psnr", r.psnr},
                            {"ssim", r.ssim},
                            {"baseline_psnr", r.baseline_psnr}});
        json out = {{"mean_psnr", rep.mean_psnr},
                    {"mean_ssim", rep.mean_ssim},
                    {"baseline_mean_psnr", rep.baseline_mean_psnr},
                    {"rows", rows}};
        std::ofstream f(json_path);
        f << out.dump(2) << "\n";
    }
}

std::vector<AblationRow> ablate(const std::vector<AblationSetting>& grid,
                                const AblationContext& ctx) {
    std::vector<AblationRow> rows;
    for (const auto& setting : grid) {
        if (setting.stages != "1" && setting.stages != "2" && setting.stages != "both")
            throw std::invalid_argument("ablate: unknown stages key '" + setting.stages + "'");
        net::NetConfig cfg = ctx.base_net;
        cfg.fuse_at = setting.fuse_at;
        cfg.validate();
        net::Backbone model = net::Backbone::init(cfg);

        if (setting.stages == "1" || setting.stages == "both") {
            if (ctx.db == nullptr) throw std::invalid_argument("ablate: stage 1 needs a teacher db");
            train::TrainConfig s1 = ctx.stage1;
            s1.n_drags = setting.n_drags;
            s1.metrics_csv.clear();
            train::train_stage1(model, ctx.train_states, *ctx.db, s1);
        }
        if (setting.stages == "2" || setting.stages == "both") {
            train::TrainConfig s2 = ctx.stage2;
            s2.n_drags = setting.n_drags;
            s2.metrics_csv.clear();
            train::train_stage2(model, ctx.train_states, s2);
        }
        EvalReport rep = evaluate(model, ctx.eval_states, setting.n_drags, ctx.eval_seed,
                                  ctx.eval_pairs_per_asset);
        rows.push_back({setting, rep.mean_psnr, rep.mean_ssim});
    }
    return rows;
}

void write_ablation(const std::vector<AblationRow>& rows, const std::string& md_path,
                    const std::string& csv_path, const std::string& png_path) {
    auto fuse_str = [](const std::vector<int>& f) {
        std::string s;
        for (int v : f) s += (s.empty() ? "" : " ") + std::to_string(v);
        return s.empty() ? "-" : s;
    };
    if (!md_path.empty()) {
        std::ofstream f(md_path);
        f << "| group | name | drags | fuse levels | stages | PSNR (dB) | SSIM |\n";
        f << "|---|---|---|---|---|---|---|\n";
        for (const auto& r : rows)
            f << "| " << r.setting.group << " | " << r.setting.name << " | " << r.setting.n_drags
              << " | " << fuse_str(r.setting.fuse_at) << " | " << r.setting.stages << " | "
              << r.mean_psnr << " | " << r.mean_ssim << " |\n";
    }
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        f << "group,name,n_drags,fuse_at,stages,mean_psnr,mean_ssim\n";
        for (const auto& r : rows)
            f << r.setting.group << "," << r.setting.name << "," << r.setting.n_drags << ","
              << fuse_str(r.setting.fuse_at) << "," << r.setting.stages << "," << r.mean_psnr
              << "," << r.mean_ssim << "\n";
    }
    if (!png_path.empty() && !rows.empty()) {
        const int bar_w = 24, gap = 8, H = 160, margin = 12;
        const int W = margin * 2 + static_cast<int>(rows.size()) * (bar_w + gap);
        std::vector<uint8_t> img(static_cast<size_t>(H) * W * 4, 255);
        double max_psnr = 1e-9;
        for (const auto& r : rows) max_psnr = std::max(max_psnr, r.mean_psnr);
        const uint8_t palette[3][3] = {{66, 133, 244}, {219, 68, 55}, {15, 157, 88}};
        std::vector<std::string> groups;
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            auto git = std::find(groups.begin(), groups.end(), r.setting.group);
            if (git == groups.end()) {
                groups.push_back(r.setting.group);
                git = groups.end() - 1;
            }
            const uint8_t* col = palette[(git - groups.begin()) % 3];
            int h = static_cast<int>(std::lround((H - 2 * margin) *
                                                 std::max(0.0, r.mean_psnr) / max_psnr));
            int x0 = margin + static_cast<int>(i) * (bar_w + gap);
            for (int y = H - margin - h; y < H - margin; ++y)
                for (int x = x0; x < x0 + bar_w; ++x) {
                    uint8_t* px = img.data() + (static_cast<size_t>(y) * W + x) * 4;
                    px[0] = col[0];
                    px[1] = col[1];
                    px[2] = col[2];
                }
        }
        png::write_rgba(png_path, H, W, img);
    }
}

}  // namespace dragsplat::metrics

#include "dragsplat/splat.hpp"

#include "dragsplat/json_util.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace dragsplat::splat {

void SplatterImage::validate() const {
    if (values.ndim() != 4 || values.dim(3) != kChannels)
        throw std::invalid_argument("SplatterImage: expected [V,H,W,14], got " +
                                    shape_str(values.shape));
    if (!values.all_finite()) throw std::invalid_argument("SplatterImage: non-finite values");
    if (static_cast<int>(cameras.size()) != views())
        throw std::invalid_argument("SplatterImage: camera count does not match view count");
    for (const auto& c : cameras) c.validate();
}

void GaussianSet::validate() const {
    const long n = size();
    if (scales.rows() != n || rotations.rows() != n || opacities.size() != n || colors.rows() != n)
        throw std::invalid_argument("GaussianSet: inconsistent row counts");
    for (long i = 0; i < n; ++i) {
        if (std::abs(rotations.row(i).norm() - 1.0) > 1e-6)
            throw std::invalid_argument("GaussianSet: non-unit quaternion at row " + std::to_string(i));
        if ((scales.row(i).array() <= 0.0).any())
            throw std::invalid_argument("GaussianSet: non-positive scale at row " + std::to_string(i));
        if (opacities[i] < 0.0 || opacities[i] > 1.0)
            throw std::invalid_argument("GaussianSet: opacity out of [0,1] at row " + std::to_string(i));
        if ((colors.row(i).array() < 0.0).any() || (colors.row(i).array() > 1.0).any())
            throw std::invalid_argument("GaussianSet: color out of [0,1] at row " + std::to_string(i));
    }
}

void view_rays(const Camera& cam, Eigen::MatrixXd& origins, Eigen::MatrixXd& dirs) {
    const long n = static_cast<long>(cam.height) * cam.width;
    origins.resize(n, 3);
    dirs.resize(n, 3);
    for (int h = 0; h < cam.height; ++h)
        for (int w = 0; w < cam.width; ++w) {
            long i = static_cast<long>(h) * cam.width + w;
            origins.row(i) = cam.position;
            dirs.row(i) = cam.ray_dir(h, w);
        }
}

namespace {

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_d(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

GaussianSet activate(const SplatterImage& raw) {
    raw.validate();
    const int V = raw.views(), H = raw.height(), W = raw.width();
    const long per_view = static_cast<long>(H) * W;
    const long n = static_cast<long>(V) * per_view;
    GaussianSet g;
    g.centers.resize(n, 3);
    g.scales.resize(n, 3);
    g.rotations.resize(n, 4);
    g.opacities.resize(n);
    g.colors.resize(n, 3);
    for (int v = 0; v < V; ++v) {
        Eigen::MatrixXd origins, dirs;
        view_rays(raw.cameras[static_cast<size_t>(v)], origins, dirs);
        for (long p = 0; p < per_view; ++p) {
            const double* px = raw.values.d.data() + (v * per_view + p) * kChannels;
            long i = v * per_view + p;
            Eigen::Vector3d anchor = origins.row(p).transpose() + kAnchorDepth * dirs.row(p).transpose();
            g.centers.row(i) = anchor.transpose() +
                               kOffsetScale * Eigen::RowVector3d(px[0], px[1], px[2]);
            for (int k = 0; k < 3; ++k)
                g.scales(i, k) = std::clamp(softplus_d(px[3 + k]), kScaleMin, kScaleMax);
            Eigen::RowVector4d q(px[6], px[7], px[8], px[9]);
            g.rotations.row(i) = q / (q.norm() + kQuatEps);
            g.opacities[i] = sigmoid_d(px[10]);
            for (int k = 0; k < 3; ++k) g.colors(i, k) = sigmoid_d(px[11 + k]);
        }
    }
    return g;
}

GaussianSet merge(const SplatterImage& views) { return activate(views); }

double match_loss(const SplatterImage& student, const SplatterImage& teacher) {
    student.validate();
    teacher.validate();
    if (!student.values.same_shape(teacher.values))
        throw std::invalid_argument("match_loss: shape mismatch " + shape_str(student.values.shape) +
                                    " vs " + shape_str(teacher.values.shape));
    return (student.values.d - teacher.values.d).square().sum();
}

GaussianVars activate_ad(const ad::Var& raw, const std::vector<Camera>& cameras) {
    if (raw->val.ndim() != 4 || raw->val.dim(3) != kChannels)
        throw std::invalid_argument("activate_ad: expected [V,H,W,14]");
    if (!raw->val.all_finite()) throw std::invalid_argument("activate_ad: non-finite input");
    const int V = raw->val.dim(0), H = raw->val.dim(1), W = raw->val.dim(2);
    if (static_cast<int>(cameras.size()) != V)
        throw std::invalid_argument("activate_ad: camera count mismatch");
    const long n = static_cast<long>(V) * H * W;

    Tensor anchors({static_cast<int>(n), 3});
    for (int v = 0; v < V; ++v) {
        Eigen::MatrixXd origins, dirs;
        view_rays(cameras[static_cast<size_t>(v)], origins, dirs);
        anchors.mat(n, 3).middleRows(static_cast<long>(v) * H * W, static_cast<long>(H) * W) =
            origins + kAnchorDepth * dirs;
    }

    ad::Var rows = ad::reshape(raw, {static_cast<int>(n), kChannels});
    GaussianVars g;
    g.centers = ad::add(ad::scale(ad::slice_cols(rows, n, kChannels, 0, 3), kOffsetScale),
                        ad::constant(std::move(anchors)));
    g.scales = ad::softplus_clamp(ad::slice_cols(rows, n, kChannels, 3, 6), kScaleMin, kScaleMax);
    g.rotations = ad::rows_normalize(ad::slice_cols(rows, n, kChannels, 6, 10), n, 4, kQuatEps);
    g.opacities = ad::sigmoid(ad::slice_cols(rows, n, kChannels, 10, 11));
    g.colors = ad::sigmoid(ad::slice_cols(rows, n, kChannels, 11, 14));
    return g;
}

ad::Var match_loss_ad(const ad::Var& student, const SplatterImage& teacher) {
    if (student->val.shape != teacher.values.shape)
        throw std::invalid_argument("match_loss_ad: shape mismatch " +
                                    shape_str(student->val.shape) + " vs " +
                                    shape_str(teacher.values.shape));
    return ad::sum_sq_diff(student, ad::constant(teacher.values));
}

double inv_softplus(double y) {
    if (y <= 0.0) throw std::invalid_argument("inv_softplus: y must be positive");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

double logit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

void save(const SplatterImage& img, const std::string& path) {
    img.validate();
    nlohmann::json j;
    j["views"] = img.views();
    j["height"] = img.height();
    j["width"] = img.width();
    j["channels"] = kChannels;
    j["channel_order"] = "offset3,raw_scale3,raw_quat4,raw_opacity1,color3";
    j["dtype"] = "float32_le";
    j["cameras"] = img.cameras;
    std::ofstream js(path + ".json");
    if (!js) throw std::runtime_error("save: cannot open " + path + ".json");
    js << j.dump(2) << "\n";

    std::ofstream bin(path + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save: cannot open " + path + ".bin");
    std::vector<float> buf(static_cast<size_t>(img.values.numel()));
    for (long i = 0; i < img.values.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(img.values.d[i]);
    bin.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

SplatterImage load(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw std::runtime_error("load: cannot open " + path + ".json");
    nlohmann::json j;
    js >> j;
    SplatterImage img;
    int V = j.at("views"), H = j.at("height"), W = j.at("width");
    if (j.at("channels").get<int>() != kChannels)
        throw std::runtime_error("load: unexpected channel count in " + path);
    img.values = Tensor({V, H, W, kChannels});
    img.cameras = j.at("cameras").get<std::vector<Camera>>();

    std::ifstream bin(path + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load: cannot open " + path + ".bin");
    std::vector<float> buf(static_cast<size_t>(img.values.numel()));
    bin.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!bin) throw std::runtime_error("load: truncated binary payload in " + path + ".bin");
    for (long i = 0; i < img.values.numel(); ++i) img.values.d[i] = buf[static_cast<size_t>(i)];
    img.validate();
    return img;
}

}  // namespace dragsplat::splat

#include "dragsplat/dragkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dragsplat::dragkit {

namespace {

bool in_unit_square(const Eigen::Vector2d& p) {
    return p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0 && p.allFinite();
}

// Pixel holding a normalized coordinate; clamped so 1.0 maps to the last pixel.
int norm_to_px(double v, int extent) {
    return std::clamp(static_cast<int>(std::floor(v * extent)), 0, extent - 1);
}

std::vector<long> mask_pixels(const std::vector<uint8_t>& mask, int height, int width) {
    if (mask.size() != static_cast<size_t>(height) * width)
        throw std::invalid_argument("propagate: mask size does not match " +
                                    std::to_string(height) + "x" + std::to_string(width));
    std::vector<long> px;
    for (long i = 0; i < static_cast<long>(mask.size()); ++i)
        if (mask[static_cast<size_t>(i)]) px.push_back(i);
    if (px.empty()) throw std::invalid_argument("propagate: empty mask");
    return px;
}

void check_propagation_input(const Drag& a, const std::vector<uint8_t>& mask, int height,
                             int width, int n) {
    a.validate();
    if (n <= 0) throw std::invalid_argument("propagate: n must be positive");
    if (a.delta().norm() == 0.0) throw std::invalid_argument("propagate: degenerate drag (dst = src)");
    long idx = static_cast<long>(norm_to_px(a.src.y(), height)) * width + norm_to_px(a.src.x(), width);
    if (!mask[static_cast<size_t>(idx)])
        throw std::invalid_argument("propagate: drag source lies outside the mask");
}

std::vector<Eigen::Vector2d> sample_sources(const std::vector<long>& px, int height, int width,
                                            int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, px.size() - 1);
    std::vector<Eigen::Vector2d> src;
    for (int i = 0; i < n; ++i) {
        long p = px[pick(rng)];
        src.emplace_back((p % width + 0.5) / width, (p / width + 0.5) / height);
    }
    return src;
}

Drag make_propagated(const Drag& a, const Eigen::Vector2d& src, const Eigen::Vector2d& disp) {
    Drag out;
    out.src = src;
    out.dst = src + disp;
    out.view = a.view;
    out.cls = a.cls;
    if (!in_unit_square(out.dst)) {
        out.dst = out.dst.cwiseMax(0.0).cwiseMin(1.0);
        out.clipped = true;
    }
    return out;
}

Tensor image_with_drag(const Tensor& image, const Drag& a) {
    if (image.shape.size() != 3 || image.shape[2] != 4)
        throw std::invalid_argument("classifier: image must be [H, W, 4], got " + shape_str(image.shape));
    const int H = image.shape[0], W = image.shape[1];
    Tensor chan = drag_channel(a, H, W);
    Tensor x({1, 5, H, W});
    for (int c = 0; c < 4; ++c)
        for (long p = 0; p < static_cast<long>(H) * W; ++p)
            x.d[c * static_cast<long>(H) * W + p] = image.d[p * 4 + c];
    x.d.tail(static_cast<long>(H) * W) = chan.d;
    return x;
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
    std::vector<int> shape(static_cast<size_t>(nd));
    f.read(reinterpret_cast<char*>(shape.data()), nd * sizeof(int));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.d.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    return t;
}

}  // namespace

void Drag::validate() const {
    if (!in_unit_square(src) || !in_unit_square(dst))
        throw std::invalid_argument("Drag: src/dst must lie in [0,1]^2");
    if (view < 0) throw std::invalid_argument("Drag: negative view index");
}

std::vector<Drag> sample_drags(const assets::ArticulatedAsset& asset, int part, double q_t,
                               double q_next, const Camera& camera, int k, uint64_t seed,
                               double eps_occ) {
    if (part < 0 || part >= static_cast<int>(asset.parts.size()))
        throw std::out_of_range("sample_drags: part index out of range");
    if (k <= 0) throw std::invalid_argument("sample_drags: k must be positive");
    camera.validate();

    assets::PosedStage stage = assets::pose_stage(asset, part, q_t);
    assets::ViewRender view = assets::render_mesh(stage, part, camera);
    const auto& joint = asset.parts[static_cast<size_t>(part)].joint;

    Eigen::MatrixXd base = assets::sample_surface(asset.parts[static_cast<size_t>(part)].mesh, k, seed);
    Eigen::MatrixXd p_t = assets::apply_transform(base, assets::part_transform(joint, q_t));
    Eigen::MatrixXd p_next = assets::apply_transform(base, assets::part_transform(joint, q_next));

    const int H = camera.height, W = camera.width;
    std::vector<Drag> drags;
    for (int i = 0; i < k; ++i) {
        Eigen::Vector3d pw = p_t.row(i);
        Eigen::Vector3d pc = camera.to_camera(pw);
        if (pc.z() <= 0.0) continue;
        Eigen::Vector2d px = camera.project(pc);
        int col = static_cast<int>(std::lround(px.x()));
        int row = static_cast<int>(std::lround(px.y()));
        if (col < 0 || col >= W || row < 0 || row >= H) continue;
        if (view.part_id[static_cast<size_t>(row) * W + col] != part) continue;
        double dist = (pw - camera.position).norm();
        if (dist > view.depth(row, col) + eps_occ) continue;  // occluded

        Eigen::Vector3d nc = camera.to_camera(p_next.row(i));
        if (nc.z() <= 0.0) continue;
        Eigen::Vector2d npx = camera.project(nc);

        Drag d;
        d.src = {(px.x() + 0.5) / W, (px.y() + 0.5) / H};
        d.dst = {(npx.x() + 0.5) / W, (npx.y() + 0.5) / H};
        d.cls = joint.type == assets::JointSpec::Type::prismatic ? 0 : 1;
        if (!in_unit_square(d.dst)) {
            d.dst = d.dst.cwiseMax(0.0).cwiseMin(1.0);
            d.clipped = true;
        }
        drags.push_back(d);
    }
    if (drags.empty())
        throw std::runtime_error("sample_drags: no visible part points from this camera; try another view");
    return drags;
}

std::vector<uint8_t> part_mask(const assets::ViewRender& view, int row, int col) {
    const int H = view.camera.height, W = view.camera.width;
    if (row < 0 || row >= H || col < 0 || col >= W)
        throw std::out_of_range("part_mask: query pixel outside the image");
    int pid = view.part_id[static_cast<size_t>(row) * W + col];
    if (pid < 0)
        throw std::invalid_argument(pid == -1 ? "part_mask: query pixel is on the static body"
                                              : "part_mask: query pixel is background");
    std::vector<uint8_t> mask(view.part_id.size());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = view.part_id[i] == pid ? 1 : 0;
    return mask;
}

std::vector<Drag> propagate_translation(const Drag& a, const std::vector<uint8_t>& mask, int height,
                                        int width, int n, uint64_t seed) {
    auto px = mask_pixels(mask, height, width);
    check_propagation_input(a, mask, height, width, n);
    Eigen::Vector2d delta = a.delta();
    std::vector<Drag> out;
    for (const auto& src : sample_sources(px, height, width, n, seed))
        out.push_back(make_propagated(a, src, delta));
    return out;
}

std::vector<Drag> propagate_rotation(const Drag& a, const std::vector<uint8_t>& mask, int height,
                                     int width, int n, uint64_t seed) {
    auto px = mask_pixels(mask, height, width);
    check_propagation_input(a, mask, height, width, n);
    Eigen::Vector2d delta = a.delta();
    auto sources = sample_sources(px, height, width, n, seed);

    // max over the sampled sources plus a.src itself (whose inner product is 0)
    double mx = 0.0;
    for (const auto& s : sources) mx = std::max(mx, delta.dot(s - a.src));
    if (mx <= 1e-9) return propagate_translation(a, mask, height, width, n, seed);

    std::vector<Drag> out;
    for (const auto& s : sources)
        out.push_back(make_propagated(a, s, delta * (1.0 - delta.dot(s - a.src) / mx)));
    return out;
}

std::vector<Drag> propagate(const Drag& a, const std::vector<uint8_t>& mask, int height, int width,
                            int n, uint64_t seed) {
    if (a.cls == 0) return propagate_translation(a, mask, height, width, n, seed);
    if (a.cls == 1) return propagate_rotation(a, mask, height, width, n, seed);
    throw std::invalid_argument("propagate: drag class unknown; classify it first");
}

Tensor drag_channel(const Drag& a, int height, int width) {
    a.validate();
    Tensor map({1, 1, height, width});
    Eigen::Vector2d p0(a.src.x() * width - 0.5, a.src.y() * height - 0.5);
    Eigen::Vector2d p1(a.dst.x() * width - 0.5, a.dst.y() * height - 0.5);
    int steps = std::max(1, static_cast<int>(std::ceil((p1 - p0).cwiseAbs().maxCoeff())) * 2);
    for (int s = 0; s <= steps; ++s) {
        double t = static_cast<double>(s) / steps;
        Eigen::Vector2d p = p0 + t * (p1 - p0);
        int col = static_cast<int>(std::lround(p.x()));
        int row = static_cast<int>(std::lround(p.y()));
        if (col < 0 || col >= width || row < 0 || row >= height) continue;
        long i = static_cast<long>(row) * width + col;
        map.d[i] = std::max(map.d[i], 0.25 + 0.75 * t);  // ramp encodes direction
    }
    return map;
}

DragClassifier DragClassifier::init(int resolution, uint64_t seed) {
    if (resolution < 4 || resolution % 4 != 0)
        throw std::invalid_argument("DragClassifier: resolution must be a positive multiple of 4");
    std::mt19937_64 rng(seed);
    auto randn = [&](std::vector<int> shape, double stdev) {
        std::normal_distribution<double> g(0.0, stdev);
        Tensor t(shape);
        for (long i = 0; i < t.numel(); ++i) t.d[i] = g(rng);
        return ad::param(t);
    };
    DragClassifier c;
    c.res = resolution;
    c.w1 = randn({8, 5, 3, 3}, std::sqrt(2.0 / (5 * 9)));
    c.b1 = ad::param(Tensor::zeros({8}));
    c.w2 = randn({16, 8, 3, 3}, std::sqrt(2.0 / (8 * 9)));
    c.b2 = ad::param(Tensor::zeros({16}));
    c.w3 = randn({16, 2}, std::sqrt(1.0 / 16));
    c.b3 = ad::param(Tensor::zeros({2}));
    return c;
}

std::vector<ad::Var> DragClassifier::params() const { return {w1, b1, w2, b2, w3, b3}; }

ad::Var DragClassifier::logits(const Tensor& image, const Drag& a) const {
    if (image.shape.size() != 3 || image.shape[0] != res || image.shape[1] != res)
        throw std::invalid_argument("classifier: expected [" + std::to_string(res) + ", " +
                                    std::to_string(res) + ", 4] image, got " + shape_str(image.shape));
    ad::Var x = ad::constant(image_with_drag(image, a));
    x = ad::silu(ad::conv2d(x, w1, b1, 2, 1));
    x = ad::silu(ad::conv2d(x, w2, b2, 2, 1));
    x = ad::avg_pool2d(x, res / 4);              // [1, 16, 1, 1]
    x = ad::reshape(x, {1, 16});
    return ad::add_row_bias(ad::matmul(x, 1, 16, w3, 2), 1, 2, b3);
}

int DragClassifier::classify(const Tensor& image, const Drag& a) const {
    if (!trained) throw std::runtime_error("DragClassifier: model not trained");
    Tensor l = logits(image, a)->val;
    return l.d[1] > l.d[0] ? 1 : 0;
}

void DragClassifier::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("DragClassifier: cannot open " + path);
    const char magic[8] = {'d', 'r', 'a', 'g', 'c', 'l', 's', '1'};
    f.write(magic, 8);
    f.write(reinterpret_cast<const char*>(&res), sizeof(res));
    for (const auto& p : params()) write_tensor(f, p->val);
}

DragClassifier DragClassifier::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("DragClassifier: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "dragcls1")
        throw std::runtime_error("DragClassifier: bad file " + path);
    int res = 0;
    f.read(reinterpret_cast<char*>(&res), sizeof(res));
    DragClassifier c = init(res, 0);
    for (auto& p : c.params()) p->val = read_tensor(f);
    if (!f) throw std::runtime_error("DragClassifier: truncated file " + path);
    c.trained = true;
    return c;
}

}  // namespace dragsplat::dragkit

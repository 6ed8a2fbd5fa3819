#include "dragsplat/assets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dragsplat::assets {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void JointSpecCheck(const JointSpec& j) { j.validate(); }

TriMesh box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    TriMesh m;
    m.vertices.resize(8, 3);
    for (int i = 0; i < 8; ++i)
        m.vertices.row(i) << (i & 1 ? hi.x() : lo.x()), (i & 2 ? hi.y() : lo.y()),
            (i & 4 ? hi.z() : lo.z());
    // 12 triangles, outward winding
    static const int f[12][3] = {{0, 2, 1}, {1, 2, 3},  // z = lo
                                 {4, 5, 6}, {5, 7, 6},  // z = hi
                                 {0, 1, 4}, {1, 5, 4},  // y = lo
                                 {2, 6, 3}, {3, 6, 7},  // y = hi
                                 {0, 4, 2}, {2, 4, 6},  // x = lo
                                 {1, 3, 5}, {3, 7, 5}}; // x = hi
    m.faces.resize(12, 3);
    for (int i = 0; i < 12; ++i) m.faces.row(i) << f[i][0], f[i][1], f[i][2];
    return m;
}

Eigen::Vector3d hsv_color(double h, double s, double v) {
    double c = v * s;
    double x = c * (1.0 - std::abs(std::fmod(h * 6.0, 2.0) - 1.0));
    double m = v - c;
    double r = 0, g = 0, b = 0;
    int sector = static_cast<int>(h * 6.0) % 6;
    switch (sector) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    return {r + m, g + m, b + m};
}

void normalize_to_unit_box(ArticulatedAsset& asset) {
    // Bounds over the extreme poses of every part plus the body.
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(kInf), hi = -lo;
    auto grow = [&](const Eigen::MatrixXd& v) {
        lo = lo.cwiseMin(v.colwise().minCoeff().transpose());
        hi = hi.cwiseMax(v.colwise().maxCoeff().transpose());
    };
    grow(asset.body.vertices);
    for (const auto& p : asset.parts) {
        grow(posed_part(p, 0.0).vertices);
        grow(posed_part(p, 1.0).vertices);
    }
    Eigen::Vector3d center = 0.5 * (lo + hi);
    double scale = 1.0 / (hi - lo).maxCoeff();
    auto remap = [&](Eigen::MatrixXd& v) {
        v = (v.rowwise() - center.transpose()) * scale;
    };
    remap(asset.body.vertices);
    for (auto& p : asset.parts) {
        remap(p.mesh.vertices);
        p.joint.pivot = (p.joint.pivot - center) * scale;
        if (p.joint.type == JointSpec::Type::prismatic) {
            p.joint.q_min *= scale;
            p.joint.q_max *= scale;
        }
    }
}

}  // namespace

void JointSpec::validate() const {
    if (std::abs(axis.norm() - 1.0) > 1e-6) throw std::invalid_argument("JointSpec: axis not unit");
    if (!(q_min < q_max)) throw std::invalid_argument("JointSpec: q_min must be < q_max");
}

ArticulatedAsset make_asset(const std::string& templ, uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + std::hash<std::string>{}(templ));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

    ArticulatedAsset asset;
    asset.template_name = templ;
    asset.seed = seed;
    asset.body_color = hsv_color(u(rng), 0.25, range(0.55, 0.75));

    const double d = range(0.5, 0.8);   // depth (x)
    const double w = range(0.6, 0.9);   // width (y)
    const double h = range(0.5, 0.8);   // height (z)

    if (templ == "drawer") {
        asset.body = box({-d / 2, -w / 2, -h / 2}, {d / 2, w / 2, h / 2});
        const double m = range(0.05, 0.09);
        const double dd = range(0.5, 0.8) * d;
        Part part;
        // Front face protrudes slightly so it is visible at q = 0.
        part.mesh = box({d / 2 - dd, -w / 2 + m, -h / 2 + m}, {d / 2 + 0.02, w / 2 - m, h / 2 - m});
        part.joint.type = JointSpec::Type::prismatic;
        part.joint.axis = {1, 0, 0};  // front-face normal
        part.joint.q_min = 0.0;
        part.joint.q_max = range(0.5, 0.75) * d;
        part.color = hsv_color(u(rng), 0.7, 0.85);
        asset.parts.push_back(std::move(part));
    } else if (templ == "door") {
        asset.body = box({-d / 2, -w / 2, -h / 2}, {d / 2, w / 2, h / 2});
        const double th = 0.04;
        Part part;
        part.mesh = box({d / 2, -w / 2, -h / 2}, {d / 2 + th, w / 2, h / 2});
        part.joint.type = JointSpec::Type::revolute;
        // Hinge on the y = -w/2 vertical edge; negative-z axis swings the
        // panel outward (toward +x) for positive angles.
        part.joint.axis = {0, 0, -1};
        part.joint.pivot = {d / 2, -w / 2, 0};
        part.joint.q_min = 0.0;
        part.joint.q_max = M_PI / 2;
        part.color = hsv_color(u(rng), 0.7, 0.85);
        asset.parts.push_back(std::move(part));
    } else {
        throw std::invalid_argument("make_asset: unknown template '" + templ + "'");
    }
    for (const auto& p : asset.parts) JointSpecCheck(p.joint);
    normalize_to_unit_box(asset);
    return asset;
}

Eigen::Matrix4d part_transform(const JointSpec& joint, double q) {
    const double qv = joint.q_min + std::clamp(q, 0.0, 1.0) * (joint.q_max - joint.q_min);
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    if (joint.type == JointSpec::Type::prismatic) {
        T.block<3, 1>(0, 3) = joint.axis * qv;
    } else {
        Eigen::Matrix3d R = Eigen::AngleAxisd(qv, joint.axis).toRotationMatrix();
        T.block<3, 3>(0, 0) = R;
        T.block<3, 1>(0, 3) = joint.pivot - R * joint.pivot;
    }
    return T;
}

Eigen::MatrixXd apply_transform(const Eigen::MatrixXd& pts, const Eigen::Matrix4d& T) {
    return (pts * T.block<3, 3>(0, 0).transpose()).rowwise() + T.block<3, 1>(0, 3).transpose();
}

TriMesh posed_part(const Part& part, double q) {
    TriMesh m = part.mesh;
    m.vertices = apply_transform(m.vertices, part_transform(part.joint, q));
    return m;
}

PosedStage pose_stage(const ArticulatedAsset& asset, int part, double q) {
    if (part < 0 || part >= static_cast<int>(asset.parts.size()))
        throw std::out_of_range("pose_stage: part index " + std::to_string(part) + " out of range");
    PosedStage st;
    st.q = q;
    long nv = asset.body.vertices.rows();
    long nf = asset.body.faces.rows();
    for (const auto& p : asset.parts) {
        nv += p.mesh.vertices.rows();
        nf += p.mesh.faces.rows();
    }
    st.mesh.vertices.resize(nv, 3);
    st.mesh.faces.resize(nf, 3);
    st.face_part.resize(static_cast<size_t>(nf));
    st.face_color.resize(static_cast<size_t>(nf));

    st.mesh.vertices.topRows(asset.body.vertices.rows()) = asset.body.vertices;
    st.mesh.faces.topRows(asset.body.faces.rows()) = asset.body.faces;
    for (long f = 0; f < asset.body.faces.rows(); ++f) {
        st.face_part[static_cast<size_t>(f)] = -1;
        st.face_color[static_cast<size_t>(f)] = asset.body_color;
    }
    long voff = asset.body.vertices.rows();
    long foff = asset.body.faces.rows();
    for (int pi = 0; pi < static_cast<int>(asset.parts.size()); ++pi) {
        const Part& p = asset.parts[static_cast<size_t>(pi)];
        TriMesh posed = posed_part(p, pi == part ? q : 0.0);
        st.mesh.vertices.middleRows(voff, posed.vertices.rows()) = posed.vertices;
        st.mesh.faces.middleRows(foff, posed.faces.rows()) = posed.faces.array() + voff;
        for (long f = 0; f < posed.faces.rows(); ++f) {
            st.face_part[static_cast<size_t>(foff + f)] = pi;
            st.face_color[static_cast<size_t>(foff + f)] = p.color;
        }
        voff += posed.vertices.rows();
        foff += posed.faces.rows();
    }
    return st;
}

std::vector<PosedStage> animate(const ArticulatedAsset& asset, int part, int n_stages) {
    if (n_stages < 2) throw std::invalid_argument("animate: need at least 2 stages");
    std::vector<PosedStage> stages;
    for (int s = 0; s < n_stages; ++s)
        stages.push_back(pose_stage(asset, part, static_cast<double>(s) / (n_stages - 1)));
    return stages;
}

std::vector<Camera> view_rig(int resolution, int n_views) {
    std::vector<Camera> rig;
    for (int k = 0; k < n_views; ++k) {
        double az = 2.0 * M_PI * k / n_views;
        Camera c;
        c.position = {2.4 * std::cos(az), 2.4 * std::sin(az), 1.5};
        c.target = {0, 0, 0};
        c.up = {0, 0, 1};
        c.height = resolution;
        c.width = resolution;
        rig.push_back(c);
    }
    return rig;
}

ViewRender render_mesh(const PosedStage& stage, int moving_part, const Camera& cam) {
    if (stage.mesh.face_count() == 0) throw std::invalid_argument("render_mesh: mesh has no triangles");
    cam.validate();
    const int H = cam.height, W = cam.width;
    ViewRender out;
    out.camera = cam;
    out.rgba = Tensor({H, W, 4});
    out.depth = Eigen::MatrixXd::Constant(H, W, kInf);
    out.mask.assign(static_cast<size_t>(H) * W, 0);
    out.part_id.assign(static_cast<size_t>(H) * W, -2);
    std::vector<int> face_id(static_cast<size_t>(H) * W, -1);

    const Eigen::Vector3d light = Eigen::Vector3d(0.5, 0.25, 0.85).normalized();

    for (long f = 0; f < stage.mesh.face_count(); ++f) {
        Eigen::Vector3d v0 = stage.mesh.vertices.row(stage.mesh.faces(f, 0));
        Eigen::Vector3d v1 = stage.mesh.vertices.row(stage.mesh.faces(f, 1));
        Eigen::Vector3d v2 = stage.mesh.vertices.row(stage.mesh.faces(f, 2));
        Eigen::Vector3d c0 = cam.to_camera(v0), c1 = cam.to_camera(v1), c2 = cam.to_camera(v2);
        if (c0.z() <= 1e-4 || c1.z() <= 1e-4 || c2.z() <= 1e-4) continue;
        Eigen::Vector2d p0 = cam.project(c0), p1 = cam.project(c1), p2 = cam.project(c2);

        int cmin = std::max(0, static_cast<int>(std::floor(std::min({p0.x(), p1.x(), p2.x()}))));
        int cmax = std::min(W - 1, static_cast<int>(std::ceil(std::max({p0.x(), p1.x(), p2.x()}))));
        int rmin = std::max(0, static_cast<int>(std::floor(std::min({p0.y(), p1.y(), p2.y()}))));
        int rmax = std::min(H - 1, static_cast<int>(std::ceil(std::max({p0.y(), p1.y(), p2.y()}))));
        if (cmin > cmax || rmin > rmax) continue;

        double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());
        if (area == 0.0) continue;
        Eigen::Vector3d n = (v1 - v0).cross(v2 - v0);
        double nn = n.norm();
        if (nn == 0.0) continue;
        n /= nn;

        for (int r = rmin; r <= rmax; ++r) {
            for (int c = cmin; c <= cmax; ++c) {
                double e0 = (p1.x() - p0.x()) * (r - p0.y()) - (p1.y() - p0.y()) * (c - p0.x());
                double e1 = (p2.x() - p1.x()) * (r - p1.y()) - (p2.y() - p1.y()) * (c - p1.x());
                double e2 = (p0.x() - p2.x()) * (r - p2.y()) - (p0.y() - p2.y()) * (c - p2.x());
                bool inside = area > 0 ? (e0 >= 0 && e1 >= 0 && e2 >= 0)
                                       : (e0 <= 0 && e1 <= 0 && e2 <= 0);
                if (!inside) continue;
                Eigen::Vector3d dir = cam.ray_dir(r, c);
                double denom = n.dot(dir);
                if (std::abs(denom) < 1e-12) continue;
                double t = n.dot(v0 - cam.position) / denom;
                if (t <= 0.0) continue;
                if (t < out.depth(r, c)) {
                    out.depth(r, c) = t;
                    face_id[static_cast<size_t>(r) * W + c] = static_cast<int>(f);
                }
            }
        }
    }

    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            int f = face_id[static_cast<size_t>(r) * W + c];
            if (f < 0) continue;
            Eigen::Vector3d v0 = stage.mesh.vertices.row(stage.mesh.faces(f, 0));
            Eigen::Vector3d v1 = stage.mesh.vertices.row(stage.mesh.faces(f, 1));
            Eigen::Vector3d v2 = stage.mesh.vertices.row(stage.mesh.faces(f, 2));
            Eigen::Vector3d n = (v1 - v0).cross(v2 - v0).normalized();
            double shade = 0.35 + 0.65 * std::abs(n.dot(light));
            Eigen::Vector3d col = stage.face_color[static_cast<size_t>(f)] * shade;
            double* px = out.rgba.d.data() + (static_cast<long>(r) * W + c) * 4;
            for (int k = 0; k < 3; ++k) px[k] = std::clamp(col[k], 0.0, 1.0);
            px[3] = 1.0;
            out.part_id[static_cast<size_t>(r) * W + c] = stage.face_part[static_cast<size_t>(f)];
            if (stage.face_part[static_cast<size_t>(f)] == moving_part)
                out.mask[static_cast<size_t>(r) * W + c] = 1;
        }
    return out;
}

std::vector<ViewRender> render_views(const PosedStage& stage, int moving_part, int resolution) {
    std::vector<ViewRender> out;
    for (const Camera& cam : view_rig(resolution)) out.push_back(render_mesh(stage, moving_part, cam));
    return out;
}

Eigen::MatrixXd sample_surface(const TriMesh& mesh, int n, uint64_t seed) {
    if (mesh.face_count() == 0) throw std::invalid_argument("sample_surface: empty mesh");
    std::vector<double> cum(static_cast<size_t>(mesh.face_count()));
    double total = 0.0;
    for (long f = 0; f < mesh.face_count(); ++f) {
        Eigen::Vector3d v0 = mesh.vertices.row(mesh.faces(f, 0));
        Eigen::Vector3d v1 = mesh.vertices.row(mesh.faces(f, 1));
        Eigen::Vector3d v2 = mesh.vertices.row(mesh.faces(f, 2));
        total += 0.5 * (v1 - v0).cross(v2 - v0).norm();
        cum[static_cast<size_t>(f)] = total;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd pts(n, 3);
    for (int i = 0; i < n; ++i) {
        double pick = u(rng) * total;
        long f = static_cast<long>(std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
        f = std::min(f, mesh.face_count() - 1);
        Eigen::Vector3d v0 = mesh.vertices.row(mesh.faces(f, 0));
        Eigen::Vector3d v1 = mesh.vertices.row(mesh.faces(f, 1));
        Eigen::Vector3d v2 = mesh.vertices.row(mesh.faces(f, 2));
        double r1 = u(rng), r2 = u(rng);
        double su = std::sqrt(r1);
        pts.row(i) = ((1.0 - su) * v0 + su * (1.0 - r2) * v1 + su * r2 * v2).transpose();
    }
    return pts;
}

}  // namespace dragsplat::assets

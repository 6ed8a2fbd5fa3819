#pragma once

#include "dragsplat/camera.hpp"
#include "dragsplat/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dragsplat::assets {

struct TriMesh {
    Eigen::MatrixXd vertices;  // N x 3
    Eigen::MatrixXi faces;     // M x 3, outward winding
    long face_count() const { return faces.rows(); }
};

struct JointSpec {
    enum class Type { prismatic, revolute };
    Type type = Type::prismatic;
    Eigen::Vector3d axis{1, 0, 0};   // unit
    Eigen::Vector3d pivot{0, 0, 0};  // revolute only
    double q_min = 0.0;              // scene units (prismatic) or radians (revolute)
    double q_max = 1.0;

    void validate() const;
};

struct Part {
    TriMesh mesh;  // at q = q_min
    JointSpec joint;
    Eigen::Vector3d color{0.8, 0.3, 0.2};
};

struct ArticulatedAsset {
    std::string template_name;
    uint64_t seed = 0;
    TriMesh body;
    Eigen::Vector3d body_color{0.6, 0.6, 0.65};
    std::vector<Part> parts;
};

// Deterministic procedural asset. Templates: "drawer" (prismatic box part
// sliding along the front-face normal) and "door" (revolute panel hinged on
// one vertical edge, limits [0, pi/2]). The whole asset is normalized so the
// union of its extreme poses fits a unit box centered at the origin.
ArticulatedAsset make_asset(const std::string& templ, uint64_t seed);

// Rigid pose of a part at normalized state q in [0, 1].
Eigen::Matrix4d part_transform(const JointSpec& joint, double q);
TriMesh posed_part(const Part& part, double q);
Eigen::MatrixXd apply_transform(const Eigen::MatrixXd& pts, const Eigen::Matrix4d& T);

struct PosedStage {
    double q = 0.0;            // normalized state
    TriMesh mesh;              // body + all parts, concatenated
    std::vector<int> face_part;  // -1 = body, otherwise part index
    std::vector<Eigen::Vector3d> face_color;
};

// Full scene (body + every part) with `part` at normalized state q and all
// other parts at q = 0.
PosedStage pose_stage(const ArticulatedAsset& asset, int part, double q);

// Animates one part through n_stages states evenly spaced over [q_min, q_max]
// (inclusive); all other parts stay at q = 0.
std::vector<PosedStage> animate(const ArticulatedAsset& asset, int part, int n_stages = 6);

struct ViewRender {
    Tensor rgba;                 // [H, W, 4] in [0, 1]
    Eigen::MatrixXd depth;       // H x W, camera-to-surface distance, +inf background
    std::vector<uint8_t> mask;   // H*W, 1 where the nearest triangle is the moving part
    std::vector<int> part_id;    // H*W, -2 background, -1 body, else part index
    Camera camera;
};

// The 12-azimuth rig: radius 2.4, height 1.5, all looking at the origin.
std::vector<Camera> view_rig(int resolution, int n_views = 12);

// Flat-shaded z-buffer rasterization with exact per-pixel ray-plane depth.
ViewRender render_mesh(const PosedStage& stage, int moving_part, const Camera& cam);
std::vector<ViewRender> render_views(const PosedStage& stage, int moving_part, int resolution);

// Area-weighted uniform surface sampling; deterministic for a fixed seed.
Eigen::MatrixXd sample_surface(const TriMesh& mesh, int n, uint64_t seed);

}  // namespace dragsplat::assets

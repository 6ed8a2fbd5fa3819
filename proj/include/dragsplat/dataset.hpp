#pragma once

#include "dragsplat/assets.hpp"
#include "dragsplat/dragkit.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dragsplat::dataset {

// One articulation state of one asset with its full 12-view rig.
struct StateSample {
    std::string asset_id;
    std::string template_name;
    uint64_t asset_seed = 0;
    int part = 0;
    int stage = 0;
    double q = 0.0;
    assets::JointSpec joint;
    std::vector<assets::ViewRender> views;    // 12 rig views
    Eigen::MatrixXd part_points;              // moving-part surface points at this state
    std::vector<dragkit::Drag> drags;         // sampled drags toward the next stage (view 0)
};

struct GenConfig {
    std::vector<std::string> templates = {"drawer", "door"};
    int assets_per_template = 2;
    int n_stages = 6;
    int resolution = 64;
    int n_points = 1024;   // surface samples stored per state
    int k_drag_samples = 64;
    uint64_t seed = 0;
};

struct Manifest {
    GenConfig config;
    std::vector<std::string> asset_ids;  // "<template>_<seed>"
};

// Writes dataset/<asset>/<stage>/{view_k.png, depth_k.bin, mask_k.png, meta.json}
// plus a root manifest.json. Deterministic for a fixed config.
Manifest generate(const std::string& root, const GenConfig& cfg);

Manifest load_manifest(const std::string& root);
StateSample load_state(const std::string& root, const std::string& asset_id, int stage);

// Rebuilds the procedural asset an id refers to.
assets::ArticulatedAsset asset_from_id(const std::string& asset_id);

// Conditioning subset of the rig: views at azimuths {0, 90, 180, 270} degrees.
std::vector<int> conditioning_views();
// The remaining 8 rig views used for stage-2 supervision and evaluation.
std::vector<int> novel_views();

}  // namespace dragsplat::dataset

#pragma once

#include "dragsplat/assets.hpp"
#include "dragsplat/tensor.hpp"
#include "dragsplat/train.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dragsplat::metrics {

// PSNR in dB over same-shape tensors with values in [0,1]; capped at 100 dB
// when the MSE drops below 1e-10.
double psnr(const Tensor& a, const Tensor& b);

// Mean SSIM over an [H, W, C] pair: 11x11 Gaussian window (sigma 1.5),
// standard constants, averaged over valid window positions and channels.
double ssim(const Tensor& a, const Tensor& b);

// Rotations below this angle classify as prismatic.
inline constexpr double kThetaMin = M_PI / 180.0;

struct JointEstimate {
    assets::JointSpec::Type type = assets::JointSpec::Type::prismatic;
    Eigen::Vector3d axis{1, 0, 0};
    Eigen::Vector3d pivot{0, 0, 0};  // revolute only
    double magnitude = 0.0;          // translation length or rotation angle
};

// Least-squares rigid transform between corresponding point sets followed by
// screw decomposition. Requires >= 3 non-collinear points.
JointEstimate estimate_joint(const Eigen::MatrixXd& pts_t, const Eigen::MatrixXd& pts_t1);

struct EvalRow {
    std::string asset;
    int from = 0, to = 0, view = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double baseline_psnr = 0.0;  // copy-the-input-state baseline
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double baseline_mean_psnr = 0.0;
};

// Renders the 8 novel rig views of every predicted transition in the set and
// scores them against the target state's ground truth.
EvalReport evaluate(const net::Backbone& model, const train::StateSet& states, int n_drags,
                    uint64_t seed, int max_pairs_per_asset = 0);
void write_report(const EvalReport& rep, const std::string& csv_path, const std::string& json_path);

// One-factor ablation harness around a base configuration.
struct AblationSetting {
    std::string group;             // "drags" | "stages" | "scales"
    std::string name;              // row label
    int n_drags = 10;
    std::vector<int> fuse_at = {0, 1, 2};
    std::string stages = "both";   // "1" | "2" | "both"
};

struct AblationRow {
    AblationSetting setting;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

struct AblationContext {
    net::NetConfig base_net;
    train::TrainConfig stage1;
    train::TrainConfig stage2;
    const train::TeacherDB* db = nullptr;
    train::StateSet train_states;
    train::StateSet eval_states;
    int eval_pairs_per_asset = 0;
    uint64_t eval_seed = 0;
};

std::vector<AblationRow> ablate(const std::vector<AblationSetting>& grid,
                                const AblationContext& ctx);
// Markdown + CSV tables and a PSNR bar chart.
void write_ablation(const std::vector<AblationRow>& rows, const std::string& md_path,
                    const std::string& csv_path, const std::string& png_path);

}  // namespace dragsplat::metrics

#pragma once

#include "dragsplat/dataset.hpp"
#include "dragsplat/net.hpp"

#include <map>
#include <string>
#include <vector>

namespace dragsplat::train {

struct TeacherConfig {
    int steps = 500;
    double lr = 5e-3;        // direct splat optimization takes a larger rate than the net
    int views_per_step = 4;  // random subset of the 12 ground-truth views per step
    double psnr_gate = 24.0;
    uint64_t seed = 0;
};

struct TeacherFit {
    splat::SplatterImage splat;  // raw parameters, conditioning-view layout
    double psnr = 0.0;           // re-render PSNR over the state's own 12 views
    bool flagged = false;        // below the gate; excluded from stage-1 supervision
};

struct TeacherDB {
    std::map<std::string, TeacherFit> entries;
    TeacherConfig config;

    std::vector<std::string> flagged_ids() const;
};

std::string state_key(const std::string& asset_id, int stage);

// Raw splat initialized from the state's rendered depth: one Gaussian per
// splat pixel, placed on the surface along its camera ray with the observed
// color; background pixels start nearly transparent at the ray anchor.
splat::SplatterImage surface_init(const dataset::StateSample& st);

TeacherFit fit_teacher(const dataset::StateSample& st, const TeacherConfig& cfg);
TeacherDB build_teacher_db(const std::string& root, const std::vector<std::string>& asset_ids,
                           const TeacherConfig& cfg);

// Directory of per-state splat files plus an index.json with scores and flags.
void save_teacher_db(const TeacherDB& db, const std::string& dir);
TeacherDB load_teacher_db(const std::string& dir);

struct TrainConfig {
    int steps = 4000;
    double lr = 5e-4;   // cosine-decayed
    int n_drags = 10;
    double lambda1 = 0.0;  // color-pyramid weight in the stage-2 photometric loss
    double lambda2 = 1.0;  // alpha weight
    double grad_clip = 1.0;  // global gradient-norm ceiling; <= 0 disables
    uint64_t seed = 0;
    std::string metrics_csv;  // loss curve destination; empty disables
};

struct TrainStats {
    double first_mean = 0.0;  // mean loss over the first 10% of steps
    double last_mean = 0.0;   // mean loss over the final 10%
    long used = 0;
    long skipped = 0;  // pairs without a usable teacher (stage 1 only)
};

// Per-asset stage sequences at the model's input resolution.
using StateSet = std::vector<std::vector<dataset::StateSample>>;

StateSet load_states(const std::string& root, const std::vector<std::string>& asset_ids);

// One user drag sampled from the source state's geometry toward the target
// state, propagated over the ground-truth part mask to n_drags drags.
std::vector<dragkit::Drag> drags_for_pair(const dataset::StateSample& from,
                                          const dataset::StateSample& to, int n_drags,
                                          uint64_t seed);

// Stage 1: raw-parameter regression onto teacher splats over all ordered
// stage pairs. Stage 2: photometric loss on the 8 novel rig views of the
// predicted Gaussians.
TrainStats train_stage1(net::Backbone& model, const StateSet& states, const TeacherDB& db,
                        const TrainConfig& cfg);
TrainStats train_stage2(net::Backbone& model, const StateSet& states, const TrainConfig& cfg);

}  // namespace dragsplat::train

#include "dragsplat/train.hpp"

#include "dragsplat/metrics.hpp"
#include "dragsplat/optim.hpp"
#include "dragsplat/raster.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dragsplat::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t state_seed(const TeacherConfig& cfg, const std::string& key) {
    return cfg.seed * 1000003ULL + std::hash<std::string>{}(key);
}

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

struct Pair {
    int asset, i, j;
};

std::vector<Pair> ordered_pairs(const StateSet& states) {
    std::vector<Pair> pairs;
    for (int a = 0; a < static_cast<int>(states.size()); ++a) {
        int n = static_cast<int>(states[static_cast<size_t>(a)].size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) pairs.push_back({a, i, j});
    }
    if (pairs.empty()) throw std::invalid_argument("train: no stage pairs in the state set");
    return pairs;
}

TrainStats finish_stats(const std::vector<double>& losses, long skipped) {
    TrainStats s;
    s.used = static_cast<long>(losses.size());
    s.skipped = skipped;
    if (losses.empty()) return s;
    size_t tenth = std::max<size_t>(1, losses.size() / 10);
    s.first_mean = std::accumulate(losses.begin(), losses.begin() + tenth, 0.0) / tenth;
    s.last_mean = std::accumulate(losses.end() - tenth, losses.end(), 0.0) / tenth;
    return s;
}

}  // namespace

std::vector<std::string> TeacherDB::flagged_ids() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries)
        if (v.flagged) out.push_back(k);
    return out;
}

std::string state_key(const std::string& asset_id, int stage) {
    return asset_id + "/" + std::to_string(stage);
}

splat::SplatterImage surface_init(const dataset::StateSample& st) {
    const int R = st.views[0].camera.height;
    if (R % 2 != 0) throw std::invalid_argument("surface_init: odd view resolution");
    const int S = R / 2;

    splat::SplatterImage raw;
    raw.cameras = half_cameras(st);
    raw.values = Tensor({static_cast<int>(raw.cameras.size()), S, S, splat::kChannels});

    const double opaque = splat::logit(0.95), faint = splat::logit(0.01);
    auto cond = dataset::conditioning_views();
    for (size_t vi = 0; vi < cond.size(); ++vi) {
        const auto& view = st.views[static_cast<size_t>(cond[vi])];
        const Camera& half = raw.cameras[vi];
        const double f_full = view.camera.focal();
        for (int r = 0; r < S; ++r)
            for (int c = 0; c < S; ++c) {
                // nearest surface depth and mean color over the 2x2 source block
                double d = std::numeric_limits<double>::infinity();
                Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
                int covered = 0;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dc = 0; dc < 2; ++dc) {
                        int fr = 2 * r + dr, fc = 2 * c + dc;
                        if (std::isfinite(view.depth(fr, fc))) {
                            d = std::min(d, view.depth(fr, fc));
                            for (int k = 0; k < 3; ++k)
                                rgb[k] += view.rgba.d[(static_cast<long>(fr) * R + fc) * 4 + k];
                            ++covered;
                        }
                    }
                double* px = raw.values.d.data() +
                             ((static_cast<long>(vi) * S + r) * S + c) * splat::kChannels;
                px[6] = 1.0;  // identity quaternion, raw (1,0,0,0)
                if (covered == 0) {
                    px[3] = px[4] = px[5] = splat::inv_softplus(0.01);
                    px[10] = faint;
                    px[11] = px[12] = px[13] = splat::logit(0.05);
                    continue;
                }
                rgb /= covered;
                Eigen::Vector3d dir = half.ray_dir(r, c);
                Eigen::Vector3d offset = (d - splat::kAnchorDepth) / splat::kOffsetScale * dir;
                for (int k = 0; k < 3; ++k) px[k] = offset[k];
                double s = std::clamp(0.75 * d / f_full, 2.0 * splat::kScaleMin,
                                      0.5 * splat::kScaleMax);
                px[3] = px[4] = px[5] = splat::inv_softplus(s);
                px[10] = opaque;
                for (int k = 0; k < 3; ++k) px[11 + k] = splat::logit(rgb[k]);
            }
    }
    return raw;
}

TeacherFit fit_teacher(const dataset::StateSample& st, const TeacherConfig& cfg) {
    splat::SplatterImage init = surface_init(st);
    ad::Var raw = ad::param(init.values);
    optim::Adam opt({raw}, cfg.lr);
    std::mt19937_64 rng(state_seed(cfg, state_key(st.asset_id, st.stage)));

    std::vector<int> order(st.views.size());
    std::iota(order.begin(), order.end(), 0);
    const int k = std::min<int>(cfg.views_per_step, static_cast<int>(order.size()));

    for (int step = 0; step < cfg.steps; ++step) {
        std::shuffle(order.begin(), order.end(), rng);
        splat::GaussianVars gv = splat::activate_ad(raw, init.cameras);
        ad::Var loss;
        for (int vi = 0; vi < k; ++vi) {
            const auto& view = st.views[static_cast<size_t>(order[static_cast<size_t>(vi)])];
            ad::Var l = raster::photometric_loss_ad(raster::render_ad(gv, view.camera), view.rgba,
                                                    0.0, 1.0);
            loss = vi == 0 ? l : ad::add(loss, l);
        }
        ad::backward(ad::scale(loss, 1.0 / k));
        opt.step(optim::cosine_lr(cfg.lr, step, cfg.steps));
    }

    TeacherFit fit;
    fit.splat.values = raw->val;
    fit.splat.cameras = init.cameras;
    splat::GaussianSet gs = splat::merge(fit.splat);
    double total = 0.0;
    for (const auto& view : st.views)
        total += metrics::psnr(rgb_of(raster::render(gs, view.camera)), rgb_of(view.rgba));
    fit.psnr = total / static_cast<double>(st.views.size());
    fit.flagged = fit.psnr < cfg.psnr_gate;
    return fit;
}

TeacherDB build_teacher_db(const std::string& root, const std::vector<std::string>& asset_ids,
                           const TeacherConfig& cfg) {
    dataset::Manifest man = dataset::load_manifest(root);
    TeacherDB db;
    db.config = cfg;
    for (const auto& id : asset_ids)
        for (int s = 0; s < man.config.n_stages; ++s)
            db.entries[state_key(id, s)] = fit_teacher(dataset::load_state(root, id, s), cfg);
    return db;
}

void save_teacher_db(const TeacherDB& db, const std::string& dir) {
    fs::create_directories(dir);
    json index;
    index["config"] = {{"steps", db.config.steps},
                       {"lr", db.config.lr},
                       {"views_per_step", db.config.views_per_step},
                       {"psnr_gate", db.config.psnr_gate},
                       {"seed", db.config.seed}};
    json entries = json::array();
    for (const auto& [key, fit] : db.entries) {
        std::string file = key;
        std::replace(file.begin(), file.end(), '/', '_');
        splat::save(fit.splat, (fs::path(dir) / file).string());
        entries.push_back({{"key", key}, {"file", file}, {"psnr", fit.psnr}, {"flagged", fit.flagged}});
    }
    index["entries"] = entries;
    std::ofstream f(fs::path(dir) / "index.json");
    f << index.dump(2) << "\n";
}

TeacherDB load_teacher_db(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "index.json");
    if (!f) throw std::runtime_error("teacher db: missing index.json under " + dir);
    json index = json::parse(f);
    TeacherDB db;
    db.config.steps = index.at("config").at("steps").get<int>();
    db.config.lr = index.at("config").at("lr").get<double>();
    db.config.views_per_step = index.at("config").at("views_per_step").get<int>();
    db.config.psnr_gate = index.at("config").at("psnr_gate").get<double>();
    db.config.seed = index.at("config").at("seed").get<uint64_t>();
    for (const auto& e : index.at("entries")) {
        TeacherFit fit;
        fit.splat = splat::load((fs::path(dir) / e.at("file").get<std::string>()).string());
        fit.psnr = e.at("psnr").get<double>();
        fit.flagged = e.at("flagged").get<bool>();
        db.entries[e.at("key").get<std::string>()] = std::move(fit);
    }
    return db;
}

StateSet load_states(const std::string& root, const std::vector<std::string>& asset_ids) {
    dataset::Manifest man = dataset::load_manifest(root);
    StateSet states;
    for (const auto& id : asset_ids) {
        std::vector<dataset::StateSample> seq;
        for (int s = 0; s < man.config.n_stages; ++s) seq.push_back(dataset::load_state(root, id, s));
        states.push_back(std::move(seq));
    }
    return states;
}

std::vector<dragkit::Drag> drags_for_pair(const dataset::StateSample& from,
                                          const dataset::StateSample& to, int n_drags,
                                          uint64_t seed) {
    auto asset = dataset::asset_from_id(from.asset_id);
    const Camera& cam = from.views[0].camera;
    auto sampled = dragkit::sample_drags(asset, from.part, from.q, to.q, cam, 64, seed);

    std::mt19937_64 rng(seed);
    std::shuffle(sampled.begin(), sampled.end(), rng);
    auto it = std::find_if(sampled.begin(), sampled.end(),
                           [](const dragkit::Drag& d) { return d.delta().norm() > 0.0; });
    if (it == sampled.end())
        throw std::runtime_error("drags_for_pair: every sampled drag is degenerate (dst = src)");
    return dragkit::propagate(*it, from.views[0].mask, cam.height, cam.width, n_drags, seed + 1);
}

TrainStats train_stage1(net::Backbone& model, const StateSet& states, const TeacherDB& db,
                        const TrainConfig& cfg) {
    auto pairs = ordered_pairs(states);
    std::vector<Tensor> inputs;  // cached per state, indexed asset * stride + stage
    size_t stride = 0;
    for (const auto& seq : states) stride = std::max(stride, seq.size());
    inputs.resize(states.size() * stride);
    for (size_t a = 0; a < states.size(); ++a)
        for (size_t s = 0; s < states[a].size(); ++s)
            inputs[a * stride + s] = net::make_input(cond_views(states[a][s]));

    optim::Adam opt(model.params(), cfg.lr);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
    std::ofstream csv;
    if (!cfg.metrics_csv.empty()) {
        csv.open(cfg.metrics_csv);
        csv << "step,loss\n";
    }

    std::vector<double> losses;
    long skipped = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const Pair& p = pairs[pick(rng)];
        const auto& from = states[static_cast<size_t>(p.asset)][static_cast<size_t>(p.i)];
        const auto& to = states[static_cast<size_t>(p.asset)][static_cast<size_t>(p.j)];
        auto it = db.entries.find(state_key(to.asset_id, to.stage));
        if (it == db.entries.end() || it->second.flagged) {
            ++skipped;
            continue;
        }
        auto drags = drags_for_pair(from, to, cfg.n_drags, cfg.seed * 1000003ULL + step);
        ad::Var raw = model.forward(inputs[static_cast<size_t>(p.asset) * stride + p.i], drags);
        ad::Var loss = ad::scale(splat::match_loss_ad(raw, it->second.splat),
                                 1.0 / static_cast<double>(raw->val.numel()));
        ad::backward(loss);
        optim::clip_grad_norm(opt.params, cfg.grad_clip);
        opt.step(optim::cosine_lr(cfg.lr, step, cfg.steps));
        losses.push_back(loss->val.d[0]);
        if (csv.is_open()) csv << step << "," << loss->val.d[0] << "\n";
    }
    return finish_stats(losses, skipped);
}

TrainStats train_stage2(net::Backbone& model, const StateSet& states, const TrainConfig& cfg) {
    auto pairs = ordered_pairs(states);
    std::vector<Tensor> inputs;
    size_t stride = 0;
    for (const auto& seq : states) stride = std::max(stride, seq.size());
    inputs.resize(states.size() * stride);
    for (size_t a = 0; a < states.size(); ++a)
        for (size_t s = 0; s < states[a].size(); ++s)
            inputs[a * stride + s] = net::make_input(cond_views(states[a][s]));

    optim::Adam opt(model.params(), cfg.lr);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
    std::ofstream csv;
    if (!cfg.metrics_csv.empty()) {
        csv.open(cfg.metrics_csv);
        csv << "step,loss\n";
    }

    auto novel = dataset::novel_views();
    std::vector<double> losses;
    for (int step = 0; step < cfg.steps; ++step) {
        const Pair& p = pairs[pick(rng)];
        const auto& from = states[static_cast<size_t>(p.asset)][static_cast<size_t>(p.i)];
        const auto& to = states[static_cast<size_t>(p.asset)][static_cast<size_t>(p.j)];
        auto drags = drags_for_pair(from, to, cfg.n_drags, cfg.seed * 999983ULL + step);
        ad::Var raw = model.forward(inputs[static_cast<size_t>(p.asset) * stride + p.i], drags);
        splat::GaussianVars gv = splat::activate_ad(raw, half_cameras(from));
        ad::Var loss;
        for (size_t vi = 0; vi < novel.size(); ++vi) {
            const auto& view = to.views[static_cast<size_t>(novel[vi])];
            ad::Var l = raster::photometric_loss_ad(raster::render_ad(gv, view.camera), view.rgba,
                                                    cfg.lambda1, cfg.lambda2);
            loss = vi == 0 ? l : ad::add(loss, l);
        }
        loss = ad::scale(loss, 1.0 / static_cast<double>(novel.size()));
        ad::backward(loss);
        optim::clip_grad_norm(opt.params, cfg.grad_clip);
        opt.step(optim::cosine_lr(cfg.lr, step, cfg.steps));
        losses.push_back(loss->val.d[0]);
        if (csv.is_open()) csv << step << "," << loss->val.d[0] << "\n";
    }
    return finish_stats(losses, 0);
}

}  // namespace dragsplat::train

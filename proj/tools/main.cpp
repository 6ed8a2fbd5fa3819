#include "dragsplat/dataset.hpp"
#include "dragsplat/metrics.hpp"
#include "dragsplat/net.hpp"
#include "dragsplat/png_io.hpp"
#include "dragsplat/raster.hpp"
#include "dragsplat/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dragsplat;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return json::parse(f);
}

template <typename T>
void get_if(const json& j, const char* key, T& v) {
    if (j.contains(key)) j.at(key).get_to(v);
}

dataset::GenConfig gen_config(const json& cfg) {
    dataset::GenConfig c;
    if (!cfg.contains("dataset")) return c;
    const json& j = cfg.at("dataset");
    get_if(j, "templates", c.templates);
    get_if(j, "assets_per_template", c.assets_per_template);
    get_if(j, "n_stages", c.n_stages);
    get_if(j, "resolution", c.resolution);
    get_if(j, "n_points", c.n_points);
    get_if(j, "k_drag_samples", c.k_drag_samples);
    get_if(j, "seed", c.seed);
    return c;
}

train::TeacherConfig teacher_config(const json& cfg) {
    train::TeacherConfig c;
    if (!cfg.contains("teacher")) return c;
    const json& j = cfg.at("teacher");
    get_if(j, "steps", c.steps);
    get_if(j, "lr", c.lr);
    get_if(j, "views_per_step", c.views_per_step);
    get_if(j, "psnr_gate", c.psnr_gate);
    get_if(j, "seed", c.seed);
    return c;
}

net::NetConfig net_config(const json& cfg) {
    net::NetConfig c;
    if (!cfg.contains("net")) return c;
    const json& j = cfg.at("net");
    get_if(j, "input_res", c.input_res);
    get_if(j, "views", c.views);
    get_if(j, "stem_width", c.stem_width);
    get_if(j, "widths", c.widths);
    get_if(j, "fuse_at", c.fuse_at);
    get_if(j, "seed", c.seed);
    return c;
}

train::TrainConfig train_config(const json& cfg, const char* section) {
    train::TrainConfig c;
    if (section == std::string("stage2")) {
        c.steps = 2000;
    }
    if (!cfg.contains(section)) return c;
    const json& j = cfg.at(section);
    get_if(j, "steps", c.steps);
    get_if(j, "lr", c.lr);
    get_if(j, "n_drags", c.n_drags);
    get_if(j, "lambda1", c.lambda1);
    get_if(j, "lambda2", c.lambda2);
    get_if(j, "grad_clip", c.grad_clip);
    get_if(j, "seed", c.seed);
    return c;
}

std::string config_hash(const json& cfg) {
    std::string s = cfg.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 8);  // 8 hex chars is plenty for run naming
}

fs::path make_run_dir(const std::string& runs_root, const json& cfg, const std::string& command) {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::tm tm{};
    localtime_r(&now, &tm);
    std::strftime(ts, sizeof ts, "%Y%m%d-%H%M%S", &tm);
    fs::path dir = fs::path(runs_root) / (std::string(ts) + "-" + config_hash(cfg));
    for (int suffix = 1; fs::exists(dir); ++suffix)  // never reuse an existing run
        dir = fs::path(runs_root) / (std::string(ts) + "-" + config_hash(cfg) + "-" +
                                     std::to_string(suffix));
    fs::create_directories(dir);
    json manifest{{"command", command},
                  {"config", cfg},
                  {"config_hash", config_hash(cfg)},
                  {"tool", "dragsplat 0.1"}};
    std::ofstream f(dir / "manifest.json");
    f << manifest.dump(2) << "\n";
    std::cout << "run dir: " << dir.string() << "\n";
    return dir;
}

std::string resolve_data_root(const std::string& flag, const json& cfg) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("DRAGSPLAT_DATA")) return env;
    std::string root = "dataset";
    get_if(cfg, "data_root", root);
    return root;
}

std::vector<std::string> resolve_assets(const std::string& csv, const std::string& root) {
    if (!csv.empty()) {
        std::vector<std::string> out;
        std::stringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
        return out;
    }
    return dataset::load_manifest(root).asset_ids;
}

dragkit::Drag parse_drag(const std::string& s) {
    double x1, y1, x2, y2;
    if (std::sscanf(s.c_str(), "%lf,%lf:%lf,%lf", &x1, &y1, &x2, &y2) != 4)
        throw std::runtime_error("drag: expected \"x1,y1:x2,y2\", got \"" + s + "\"");
    dragkit::Drag d;
    d.src = {x1, y1};
    d.dst = {x2, y2};
    d.view = 0;
    d.validate();
    return d;
}

std::vector<assets::ViewRender> cond_views(const dataset::StateSample& st) {
    std::vector<assets::ViewRender> out;
    for (int v : dataset::conditioning_views()) out.push_back(st.views[static_cast<size_t>(v)]);
    return out;
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

std::vector<uint8_t> to_u8(const Tensor& img) {
    std::vector<uint8_t> out(static_cast<size_t>(img.numel()));
    for (long i = 0; i < img.numel(); ++i)
        out[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::lround(std::clamp(img.d[i], 0.0, 1.0) * 255.0));
    return out;
}

std::vector<metrics::AblationSetting> ablation_grid(const json& cfg) {
    if (cfg.contains("ablate") && cfg.at("ablate").contains("grid")) {
        std::vector<metrics::AblationSetting> grid;
        for (const auto& j : cfg.at("ablate").at("grid")) {
            metrics::AblationSetting s;
            get_if(j, "group", s.group);
            get_if(j, "name", s.name);
            get_if(j, "n_drags", s.n_drags);
            get_if(j, "fuse_at", s.fuse_at);
            get_if(j, "stages", s.stages);
            grid.push_back(std::move(s));
        }
        return grid;
    }
    return {
        {"drags", "n1", 1, {0, 1, 2}, "both"},
        {"drags", "n5", 5, {0, 1, 2}, "both"},
        {"drags", "n10", 10, {0, 1, 2}, "both"},
        {"stages", "stage1-only", 10, {0, 1, 2}, "1"},
        {"stages", "stage2-only", 10, {0, 1, 2}, "2"},
        {"stages", "both", 10, {0, 1, 2}, "both"},
        {"scales", "level0", 10, {0}, "both"},
        {"scales", "level1", 10, {1}, "both"},
        {"scales", "level2", 10, {2}, "both"},
        {"scales", "multi", 10, {0, 1, 2}, "both"},
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"drag-conditioned articulated 3D reconstruction"};
    app.require_subcommand(1);

    std::string config_path, data_flag, runs_root = "runs";
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--data", data_flag, "dataset root (overrides config and DRAGSPLAT_DATA)");
    app.add_option("--runs", runs_root, "run output root");

    auto* gen = app.add_subcommand("gen-data", "generate the procedural dataset");
    uint64_t gen_seed = 0;
    gen->add_option("--seed", gen_seed, "dataset seed override");

    auto* teach = app.add_subcommand("fit-teachers", "fit per-state teacher splats");
    std::string teach_assets, teach_out;
    teach->add_option("--assets", teach_assets, "comma-separated asset id subset");
    teach->add_option("--out", teach_out, "teacher db directory (default inside the run dir)");

    auto* tr = app.add_subcommand("train", "train the predictor");
    std::string tr_stage = "both", tr_teachers, tr_init, tr_assets;
    tr->add_option("--stage", tr_stage, "1 | 2 | both")->check(CLI::IsMember({"1", "2", "both"}));
    tr->add_option("--teachers", tr_teachers, "teacher db directory (stage 1)");
    tr->add_option("--init", tr_init, "checkpoint to continue from");
    tr->add_option("--assets", tr_assets, "comma-separated asset id subset");

    auto* inf = app.add_subcommand("infer", "predict the next state from one drag");
    std::string inf_ckpt, inf_asset, inf_drag;
    int inf_stage = 0, inf_ndrags = 10;
    inf->add_option("--checkpoint", inf_ckpt)->required();
    inf->add_option("--asset", inf_asset)->required();
    inf->add_option("--stage", inf_stage, "conditioning stage index");
    inf->add_option("--drag", inf_drag, "normalized \"x1,y1:x2,y2\" on view 0")->required();
    inf->add_option("--n-drags", inf_ndrags);

    auto* ev = app.add_subcommand("eval", "score a checkpoint on held-out transitions");
    std::string ev_ckpt, ev_assets;
    int ev_ndrags = 10, ev_max_pairs = 0;
    uint64_t ev_seed = 0;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--assets", ev_assets, "comma-separated asset id subset");
    ev->add_option("--n-drags", ev_ndrags);
    ev->add_option("--max-pairs", ev_max_pairs, "pairs per asset (0 = all)");
    ev->add_option("--seed", ev_seed);

    auto* ab = app.add_subcommand("ablate", "train and score the ablation grid");
    std::string ab_teachers, ab_train_assets, ab_eval_assets;
    int ab_max_pairs = 2;
    ab->add_option("--teachers", ab_teachers, "teacher db (needed for stage-1 rows)");
    ab->add_option("--train-assets", ab_train_assets);
    ab->add_option("--eval-assets", ab_eval_assets);
    ab->add_option("--max-pairs", ab_max_pairs, "eval pairs per asset");

    auto* ej = app.add_subcommand("estimate-joint", "recover the joint between two states");
    std::string ej_asset;
    int ej_from = 0, ej_to = 1;
    ej->add_option("--asset", ej_asset)->required();
    ej->add_option("--from", ej_from);
    ej->add_option("--to", ej_to);

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = load_config(config_path);
        std::string data_root = resolve_data_root(data_flag, cfg);

        if (gen->parsed()) {
            dataset::GenConfig gc = gen_config(cfg);
            if (gen->count("--seed") > 0) gc.seed = gen_seed;
            json full = cfg;
            full["dataset"] = {{"templates", gc.templates},
                               {"assets_per_template", gc.assets_per_template},
                               {"n_stages", gc.n_stages},
                               {"resolution", gc.resolution},
                               {"seed", gc.seed}};
            make_run_dir(runs_root, full, "gen-data");
            dataset::Manifest man = dataset::generate(data_root, gc);
            std::cout << "wrote " << man.asset_ids.size() << " assets x " << gc.n_stages
                      << " stages to " << data_root << "\n";
        } else if (teach->parsed()) {
            train::TeacherConfig tc = teacher_config(cfg);
            fs::path run = make_run_dir(runs_root, cfg, "fit-teachers");
            auto ids = resolve_assets(teach_assets, data_root);
            train::TeacherDB db = train::build_teacher_db(data_root, ids, tc);
            std::string out = teach_out.empty() ? (run / "teachers").string() : teach_out;
            train::save_teacher_db(db, out);
            auto flagged = db.flagged_ids();
            std::cout << "fit " << db.entries.size() << " states, " << flagged.size()
                      << " below the " << tc.psnr_gate << " dB gate -> " << out << "\n";
            for (const auto& id : flagged) std::cout << "  flagged: " << id << "\n";
        } else if (tr->parsed()) {
            fs::path run = make_run_dir(runs_root, cfg, "train");
            auto ids = resolve_assets(tr_assets, data_root);
            train::StateSet states = train::load_states(data_root, ids);

            net::Backbone model = [&] {
                if (!tr_init.empty()) return net::load_checkpoint(tr_init);
                if (tr_stage == "2")
                    std::cerr << "warning: stage 2 without --init trains from scratch\n";
                return net::Backbone::init(net_config(cfg));
            }();

            if (tr_stage == "1" || tr_stage == "both") {
                if (tr_teachers.empty())
                    throw std::runtime_error("train: stage 1 needs --teachers");
                train::TeacherDB db = train::load_teacher_db(tr_teachers);
                train::TrainConfig c1 = train_config(cfg, "stage1");
                c1.metrics_csv = (run / "stage1_loss.csv").string();
                train::TrainStats s = train::train_stage1(model, states, db, c1);
                net::save_checkpoint((run / "stage1.ckpt").string(), model, "stage1");
                std::cout << "stage 1: " << s.used << " steps (" << s.skipped << " skipped), loss "
                          << s.first_mean << " -> " << s.last_mean << "\n";
            }
            if (tr_stage == "2" || tr_stage == "both") {
                train::TrainConfig c2 = train_config(cfg, "stage2");
                c2.metrics_csv = (run / "stage2_loss.csv").string();
                train::TrainStats s = train::train_stage2(model, states, c2);
                net::save_checkpoint((run / "stage2.ckpt").string(), model, "stage2");
                std::cout << "stage 2: " << s.used << " steps, loss " << s.first_mean << " -> "
                          << s.last_mean << "\n";
            }
        } else if (inf->parsed()) {
            fs::path run = make_run_dir(runs_root, cfg, "infer");
            net::Backbone model = net::load_checkpoint(inf_ckpt);
            dataset::StateSample st = dataset::load_state(data_root, inf_asset, inf_stage);

            dragkit::Drag drag = parse_drag(inf_drag);
            if (drag.delta().norm() < 1e-9)
                throw std::runtime_error("degenerate drag: source equals destination");
            drag.cls = st.joint.type == assets::JointSpec::Type::prismatic ? 0 : 1;

            auto views = cond_views(st);
            const int R = views[0].camera.height;
            int pr = std::clamp(static_cast<int>(drag.src.y() * R), 0, R - 1);
            int pc = std::clamp(static_cast<int>(drag.src.x() * R), 0, R - 1);
            int pid = views[0].part_id[static_cast<size_t>(pr) * R + pc];
            if (pid < 0)
                throw std::runtime_error("drag source does not land on a movable part");
            std::vector<uint8_t> mask(views[0].part_id.size());
            for (size_t i = 0; i < mask.size(); ++i) mask[i] = views[0].part_id[i] == pid;

            auto drags = dragkit::propagate(drag, mask, R, R, inf_ndrags, 0);
            ad::Var raw = model.forward(net::make_input(views), drags);
            splat::SplatterImage pred;
            pred.values = raw->val;
            pred.cameras = half_cameras(st);
            splat::save(pred, (run / "pred_splat").string());

            splat::GaussianSet gs = splat::merge(pred);
            auto rig = assets::view_rig(R);
            for (size_t k = 0; k < rig.size(); ++k) {
                Tensor img = raster::render(gs, rig[k]);
                png::write_rgba((run / ("render_" + std::to_string(k) + ".png")).string(), R, R,
                                to_u8(img));
            }
            std::cout << "wrote predicted splat and " << rig.size() << " renders\n";
        } else if (ev->parsed()) {
            fs::path run = make_run_dir(runs_root, cfg, "eval");
            net::Backbone model = net::load_checkpoint(ev_ckpt);
            train::StateSet states =
                train::load_states(data_root, resolve_assets(ev_assets, data_root));
            metrics::EvalReport rep =
                metrics::evaluate(model, states, ev_ndrags, ev_seed, ev_max_pairs);
            metrics::write_report(rep, (run / "eval.csv").string(), (run / "eval.json").string());
            std::cout << "mean PSNR " << rep.mean_psnr << " dB, mean SSIM " << rep.mean_ssim
                      << ", copy-input baseline " << rep.baseline_mean_psnr << " dB over "
                      << rep.rows.size() << " rows\n";
        } else if (ab->parsed()) {
            fs::path run = make_run_dir(runs_root, cfg, "ablate");
            metrics::AblationContext ctx;
            ctx.base_net = net_config(cfg);
            ctx.stage1 = train_config(cfg, "stage1");
            ctx.stage2 = train_config(cfg, "stage2");
            ctx.train_states =
                train::load_states(data_root, resolve_assets(ab_train_assets, data_root));
            ctx.eval_states = ab_eval_assets.empty() && ab_train_assets.empty()
                                  ? ctx.train_states
                                  : train::load_states(data_root,
                                                       resolve_assets(ab_eval_assets, data_root));
            ctx.eval_pairs_per_asset = ab_max_pairs;
            train::TeacherDB db;
            if (!ab_teachers.empty()) {
                db = train::load_teacher_db(ab_teachers);
                ctx.db = &db;
            }
            auto rows = metrics::ablate(ablation_grid(cfg), ctx);
            metrics::write_ablation(rows, (run / "ablation.md").string(),
                                    (run / "ablation.csv").string(),
                                    (run / "ablation.png").string());
            for (const auto& r : rows)
                std::cout << r.setting.group << "/" << r.setting.name << ": " << r.mean_psnr
                          << " dB\n";
        } else if (ej->parsed()) {
            fs::path run = make_run_dir(runs_root, cfg, "estimate-joint");
            dataset::StateSample a = dataset::load_state(data_root, ej_asset, ej_from);
            dataset::StateSample b = dataset::load_state(data_root, ej_asset, ej_to);
            metrics::JointEstimate est = metrics::estimate_joint(a.part_points, b.part_points);
            json out{{"type",
                      est.type == assets::JointSpec::Type::prismatic ? "prismatic" : "revolute"},
                     {"axis", {est.axis.x(), est.axis.y(), est.axis.z()}},
                     {"pivot", {est.pivot.x(), est.pivot.y(), est.pivot.z()}},
                     {"magnitude", est.magnitude},
                     {"true_type", a.joint.type == assets::JointSpec::Type::prismatic
                                       ? "prismatic"
                                       : "revolute"},
                     {"true_axis", {a.joint.axis.x(), a.joint.axis.y(), a.joint.axis.z()}}};
            std::ofstream f(run / "joint.json");
            f << out.dump(2) << "\n";
            std::cout << out.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

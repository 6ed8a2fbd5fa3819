#include "dragsplat/dataset.hpp"

#include "dragsplat/json_util.hpp"
#include "dragsplat/png_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dragsplat::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json joint_json(const assets::JointSpec& j) {
    return json{{"type", j.type == assets::JointSpec::Type::prismatic ? "prismatic" : "revolute"},
                {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                {"pivot", {j.pivot.x(), j.pivot.y(), j.pivot.z()}},
                {"q_min", j.q_min},
                {"q_max", j.q_max}};
}

assets::JointSpec joint_from_json(const json& j) {
    assets::JointSpec s;
    s.type = j.at("type").get<std::string>() == "prismatic" ? assets::JointSpec::Type::prismatic
                                                            : assets::JointSpec::Type::revolute;
    s.axis = {j.at("axis").at(0).get<double>(), j.at("axis").at(1).get<double>(),
              j.at("axis").at(2).get<double>()};
    s.pivot = {j.at("pivot").at(0).get<double>(), j.at("pivot").at(1).get<double>(),
               j.at("pivot").at(2).get<double>()};
    s.q_min = j.at("q_min").get<double>();
    s.q_max = j.at("q_max").get<double>();
    return s;
}

json config_json(const GenConfig& c) {
    return json{{"templates", c.templates},
                {"assets_per_template", c.assets_per_template},
                {"n_stages", c.n_stages},
                {"resolution", c.resolution},
                {"n_points", c.n_points},
                {"k_drag_samples", c.k_drag_samples},
                {"seed", c.seed}};
}

GenConfig config_from_json(const json& j) {
    GenConfig c;
    c.templates = j.at("templates").get<std::vector<std::string>>();
    c.assets_per_template = j.at("assets_per_template").get<int>();
    c.n_stages = j.at("n_stages").get<int>();
    c.resolution = j.at("resolution").get<int>();
    c.n_points = j.at("n_points").get<int>();
    c.k_drag_samples = j.at("k_drag_samples").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void write_floats(const fs::path& path, const double* data, long n) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + path.string());
    std::vector<float> buf(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

std::vector<float> read_floats(const fs::path& path, long n) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + path.string());
    std::vector<float> buf(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!f) throw std::runtime_error("dataset: truncated " + path.string());
    return buf;
}

std::vector<uint8_t> to_u8(const Eigen::ArrayXd& v) {
    std::vector<uint8_t> out(static_cast<size_t>(v.size()));
    for (long i = 0; i < v.size(); ++i)
        out[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
    return out;
}

void write_state(const fs::path& dir, const StateSample& st, const GenConfig& cfg) {
    fs::create_directories(dir);
    const int R = cfg.resolution;
    json cams = json::array();
    for (size_t k = 0; k < st.views.size(); ++k) {
        const auto& v = st.views[k];
        png::write_rgba((dir / ("view_" + std::to_string(k) + ".png")).string(), R, R,
                        to_u8(v.rgba.d));
        // +inf background survives the float32 round trip
        std::vector<float> dbuf(static_cast<size_t>(R) * R);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < R; ++c)
                dbuf[static_cast<size_t>(r) * R + c] = static_cast<float>(v.depth(r, c));
        std::ofstream df(dir / ("depth_" + std::to_string(k) + ".bin"), std::ios::binary);
        df.write(reinterpret_cast<const char*>(dbuf.data()),
                 static_cast<std::streamsize>(dbuf.size() * sizeof(float)));
        std::vector<uint8_t> m(v.mask.size());
        for (size_t i = 0; i < m.size(); ++i) m[i] = v.mask[i] ? 255 : 0;
        png::write_gray((dir / ("mask_" + std::to_string(k) + ".png")).string(), R, R, m);
        nlohmann::json cj;
        to_json(cj, v.camera);
        cams.push_back(cj);
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pts = st.part_points;
    write_floats(dir / "points.bin", pts.data(), pts.size());

    json meta{{"asset_id", st.asset_id},
              {"template", st.template_name},
              {"asset_seed", st.asset_seed},
              {"part", st.part},
              {"stage", st.stage},
              {"q", st.q},
              {"joint", joint_json(st.joint)},
              {"cameras", cams},
              {"n_points", static_cast<int>(st.part_points.rows())},
              {"points", "points.bin"},
              {"drags", st.drags}};
    std::ofstream mf(dir / "meta.json");
    mf << meta.dump(2) << "\n";
}

}  // namespace

std::vector<int> conditioning_views() { return {0, 3, 6, 9}; }

std::vector<int> novel_views() { return {1, 2, 4, 5, 7, 8, 10, 11}; }

assets::ArticulatedAsset asset_from_id(const std::string& asset_id) {
    auto pos = asset_id.rfind('_');
    if (pos == std::string::npos) throw std::invalid_argument("dataset: bad asset id " + asset_id);
    return assets::make_asset(asset_id.substr(0, pos), std::stoull(asset_id.substr(pos + 1)));
}

Manifest generate(const std::string& root, const GenConfig& cfg) {
    if (cfg.n_stages < 2) throw std::invalid_argument("dataset: need at least 2 stages");
    fs::create_directories(root);
    Manifest man;
    man.config = cfg;

    int index = 0;
    for (const auto& templ : cfg.templates)
        for (int i = 0; i < cfg.assets_per_template; ++i, ++index) {
            uint64_t seed = cfg.seed * 1000 + static_cast<uint64_t>(index);
            auto asset = assets::make_asset(templ, seed);
            std::string id = templ + "_" + std::to_string(seed);
            man.asset_ids.push_back(id);

            const int part = 0;
            auto stages = assets::animate(asset, part, cfg.n_stages);
            // the part's base surface sample is shared so point correspondences
            // across stages come from construction
            Eigen::MatrixXd base =
                assets::sample_surface(asset.parts[part].mesh, cfg.n_points, seed + 17);
            auto rig = assets::view_rig(cfg.resolution);

            for (int s = 0; s < cfg.n_stages; ++s) {
                StateSample st;
                st.asset_id = id;
                st.template_name = templ;
                st.asset_seed = seed;
                st.part = part;
                st.stage = s;
                st.q = stages[static_cast<size_t>(s)].q;
                st.joint = asset.parts[part].joint;
                for (const auto& cam : rig)
                    st.views.push_back(assets::render_mesh(stages[static_cast<size_t>(s)], part, cam));
                st.part_points = assets::apply_transform(
                    base, assets::part_transform(st.joint, st.q));
                if (s + 1 < cfg.n_stages)
                    st.drags = dragkit::sample_drags(asset, part, st.q,
                                                     stages[static_cast<size_t>(s + 1)].q, rig[0],
                                                     cfg.k_drag_samples, seed + 31);
                write_state(fs::path(root) / id / std::to_string(s), st, cfg);
            }
        }

    json mj{{"config", config_json(cfg)}, {"assets", man.asset_ids}};
    std::ofstream f(fs::path(root) / "manifest.json");
    f << mj.dump(2) << "\n";
    return man;
}

Manifest load_manifest(const std::string& root) {
    std::ifstream f(fs::path(root) / "manifest.json");
    if (!f) throw std::runtime_error("dataset: missing manifest.json under " + root);
    json j = json::parse(f);
    Manifest man;
    man.config = config_from_json(j.at("config"));
    man.asset_ids = j.at("assets").get<std::vector<std::string>>();
    return man;
}

StateSample load_state(const std::string& root, const std::string& asset_id, int stage) {
    fs::path dir = fs::path(root) / asset_id / std::to_string(stage);
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw std::runtime_error("dataset: missing " + (dir / "meta.json").string());
    json meta = json::parse(mf);

    StateSample st;
    st.asset_id = meta.at("asset_id").get<std::string>();
    st.template_name = meta.at("template").get<std::string>();
    st.asset_seed = meta.at("asset_seed").get<uint64_t>();
    st.part = meta.at("part").get<int>();
    st.stage = meta.at("stage").get<int>();
    st.q = meta.at("q").get<double>();
    st.joint = joint_from_json(meta.at("joint"));
    st.drags = meta.at("drags").get<std::vector<dragkit::Drag>>();

    const auto& cams = meta.at("cameras");
    for (size_t k = 0; k < cams.size(); ++k) {
        assets::ViewRender v;
        from_json(cams[k], v.camera);
        const int R = v.camera.height;
        png::ImageU8 img = png::read((dir / ("view_" + std::to_string(k) + ".png")).string());
        if (img.height != R || img.width != R || img.channels != 4)
            throw std::runtime_error("dataset: unexpected view image in " + dir.string());
        v.rgba = Tensor({R, R, 4});
        for (long i = 0; i < v.rgba.numel(); ++i) v.rgba.d[i] = img.data[static_cast<size_t>(i)] / 255.0;

        auto dbuf = read_floats(dir / ("depth_" + std::to_string(k) + ".bin"),
                                static_cast<long>(R) * R);
        v.depth.resize(R, R);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < R; ++c) v.depth(r, c) = dbuf[static_cast<size_t>(r) * R + c];

        png::ImageU8 m = png::read((dir / ("mask_" + std::to_string(k) + ".png")).string());
        if (m.channels != 1 || m.height != R || m.width != R)
            throw std::runtime_error("dataset: unexpected mask image in " + dir.string());
        v.mask.resize(static_cast<size_t>(R) * R);
        v.part_id.resize(static_cast<size_t>(R) * R);
        for (size_t i = 0; i < v.mask.size(); ++i) {
            v.mask[i] = m.data[i] > 127 ? 1 : 0;
            // part ids reconstructed from the stored mask + coverage
            v.part_id[i] = v.mask[i] ? st.part : (v.rgba.d[static_cast<long>(i) * 4 + 3] > 0.5 ? -1 : -2);
        }
        st.views.push_back(std::move(v));
    }

    int n_points = meta.at("n_points").get<int>();
    auto pbuf = read_floats(dir / meta.at("points").get<std::string>(), static_cast<long>(n_points) * 3);
    st.part_points.resize(n_points, 3);
    for (int i = 0; i < n_points; ++i)
        for (int c = 0; c < 3; ++c) st.part_points(i, c) = pbuf[static_cast<size_t>(i) * 3 + c];
    return st;
}

}  // namespace dragsplat::dataset

#pragma once

#include "dragsplat/camera.hpp"
#include "dragsplat/dragkit.hpp"

#include <json.hpp>

namespace dragsplat {

inline void to_json(nlohmann::json& j, const Camera& c) {
    j = nlohmann::json{{"position", {c.position.x(), c.position.y(), c.position.z()}},
                       {"target", {c.target.x(), c.target.y(), c.target.z()}},
                       {"up", {c.up.x(), c.up.y(), c.up.z()}},
                       {"fov_y", c.fov_y},
                       {"height", c.height},
                       {"width", c.width}};
}

inline void from_json(const nlohmann::json& j, Camera& c) {
    auto vec3 = [&](const char* key) {
        const auto& a = j.at(key);
        return Eigen::Vector3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
    };
    c.position = vec3("position");
    c.target = vec3("target");
    c.up = vec3("up");
    c.fov_y = j.at("fov_y").get<double>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
}

namespace dragkit {

inline void to_json(nlohmann::json& j, const Drag& d) {
    j = nlohmann::json{{"src", {d.src.x(), d.src.y()}},
                       {"dst", {d.dst.x(), d.dst.y()}},
                       {"view", d.view},
                       {"cls", d.cls},
                       {"clipped", d.clipped}};
}

inline void from_json(const nlohmann::json& j, Drag& d) {
    d.src = {j.at("src").at(0).get<double>(), j.at("src").at(1).get<double>()};
    d.dst = {j.at("dst").at(0).get<double>(), j.at("dst").at(1).get<double>()};
    d.view = j.at("view").get<int>();
    d.cls = j.value("cls", -1);
    d.clipped = j.value("clipped", false);
}

}  // namespace dragkit

}  // namespace dragsplat

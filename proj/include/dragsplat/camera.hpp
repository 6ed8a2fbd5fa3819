#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace dragsplat {

// Pinhole camera. World is z-up; image rows grow downward.
struct Camera {
    Eigen::Vector3d position{0, 0, 0};
    Eigen::Vector3d target{0, 0, 1};
    Eigen::Vector3d up{0, 0, 1};
    double fov_y = 0.6981317007977318;  // 40 degrees
    int height = 64;
    int width = 64;

    void validate() const {
        if (!(fov_y > 0.0 && fov_y < M_PI)) throw std::invalid_argument("Camera: fov_y out of (0, pi)");
        if ((position - target).norm() == 0.0)
            throw std::invalid_argument("Camera: position equals target");
        if (height <= 0 || width <= 0) throw std::invalid_argument("Camera: non-positive image size");
    }

    // Rows of the returned matrix: right, down, forward (world -> camera).
    Eigen::Matrix3d rotation() const {
        Eigen::Vector3d fwd = (target - position).normalized();
        Eigen::Vector3d right = fwd.cross(up).normalized();
        Eigen::Vector3d down = fwd.cross(right).normalized();
        Eigen::Matrix3d R;
        R.row(0) = right;
        R.row(1) = down;
        R.row(2) = fwd;
        return R;
    }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return rotation() * (p - position); }

    double focal() const { return 0.5 * height / std::tan(0.5 * fov_y); }
    double cx() const { return 0.5 * width - 0.5; }
    double cy() const { return 0.5 * height - 0.5; }

    // Continuous pixel coordinates of a camera-space point (z must be > 0).
    Eigen::Vector2d project(const Eigen::Vector3d& pc) const {
        return {focal() * pc.x() / pc.z() + cx(), focal() * pc.y() / pc.z() + cy()};
    }

    // Unit world-space ray direction through pixel center (row, col).
    Eigen::Vector3d ray_dir(int row, int col) const {
        double f = focal();
        Eigen::Vector3d dc((col - cx()) / f, (row - cy()) / f, 1.0);
        return (rotation().transpose() * dc).normalized();
    }
};

}  // namespace dragsplat

#pragma once

#include "gala/geometry.hpp"

namespace gala {

// Pinhole camera. World-to-camera transform: x_cam = rot * x_world + trans,
// camera looks down +z; pixel centers sit at (x + 0.5, y + 0.5).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    Mat3 rot = Mat3::identity();
    Vec3 trans{};

    Vec3 center() const {
        // -Rᵀ t
        const Mat3 rt = rot.transposed();
        const Vec3 c = rt * trans;
        return {-c.x, -c.y, -c.z};
    }

    Vec3 to_camera(const Vec3& world) const { return rot * world + trans; }
};

// Camera at `eye` looking at `target`, +z toward the target.
Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height);

void validate_camera(const Camera& cam);

} // namespace gala

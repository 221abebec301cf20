#include "gala/camera.hpp"

#include "gala/errors.hpp"

namespace gala {

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height) {
    const Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-9) right = fwd.cross(Vec3{0.0, 0.0, 1.0});
    right = right.normalized();
    const Vec3 down = fwd.cross(right); // y axis of an x-right / y-down / z-forward camera
    // Rows of the world-to-camera rotation are the camera axes in world frame.
    Camera cam;
    cam.rot(0, 0) = right.x;
    cam.rot(0, 1) = right.y;
    cam.rot(0, 2) = right.z;
    cam.rot(1, 0) = down.x;
    cam.rot(1, 1) = down.y;
    cam.rot(1, 2) = down.z;
    cam.rot(2, 0) = fwd.x;
    cam.rot(2, 1) = fwd.y;
    cam.rot(2, 2) = fwd.z;
    const Vec3 re = cam.rot * eye;
    cam.trans = {-re.x, -re.y, -re.z};
    cam.fx = cam.fy = focal;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    cam.width = width;
    cam.height = height;
    validate_camera(cam);
    return cam;
}

void validate_camera(const Camera& cam) {
    if (cam.fx <= 0.0 || cam.fy <= 0.0)
        throw validation_error("camera: focal lengths must be positive");
    if (cam.width < 1 || cam.height < 1)
        throw validation_error("camera: image size must be at least 1x1");
}

} // namespace gala

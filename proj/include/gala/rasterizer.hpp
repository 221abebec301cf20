#pragma once

#include "gala/camera.hpp"
#include "gala/gaussians.hpp"
#include "gala/tape.hpp"

#include <optional>
#include <vector>

namespace gala {

enum class ChannelTag { color, instance, language };

// H×W×d plane stored as an (H*W)×d tensor, rows in raster order.
struct FeatureMap {
    int height = 0;
    int width = 0;
    ChannelTag tag = ChannelTag::color;
    Tensor values;

    int channels() const { return values.defined() ? values.cols() : 0; }
};

// Renderer defaults; declared here rather than claimed from any source.
inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovRegularization = 0.3; // added to the 2×2 screen covariance
inline constexpr double kCutoffQ = 9.0;           // 3-sigma support: σ is exactly 0 beyond
inline constexpr double kEarlyStopT = 1e-4;

struct Splat2D {
    double mean_x = 0.0, mean_y = 0.0;
    Sym2 cov;          // regularized screen covariance
    double depth = 0.0;
    double opacity = 0.0;
    int payload = -1;  // row into the payload tensor
};

// EWA-style perspective projection; near-plane culling returns nullopt.
std::optional<Splat2D> project_gaussian(const Vec3& mean, const std::array<double, 6>& cov3,
                                        double opacity, const Camera& cam, int payload_row = -1);

// σ = α·exp(-½ dᵀΣ'⁻¹d) with compact 3-sigma support (exactly 0 for q > 9).
double evaluate_opacity(const Splat2D& splat, double px, double py);

// Front-to-back blend over a depth-sorted splat list; returns the leftover
// transmittance. early_stop_t <= 0 disables early termination. `out` receives
// the payload channel sums.
double composite_pixel(const std::vector<Splat2D>& sorted, const Tensor& payloads, double px,
                       double py, double early_stop_t, double* out);

struct RenderOptions {
    bool exact = false;      // no support-window binning, implies no early termination
    bool early_stop = true;  // T < 1e-4 truncation; disabled in oracle-comparison mode
    int threads = 1;         // forward rows may run in parallel; output is bitwise identical
};

struct RenderResult {
    Var color;            // (H*W)×3
    Var instance;         // (H*W)×d_ins
    Tensor transmittance; // (H*W)×1 leftover T per pixel
    Tensor coverage;      // (H*W)×1 Σ Tσ per pixel
};

// Differentiable rasterization node: means M×3, cov6 M×6 packed, opacities
// M×1, payload M×C -> (H*W)×C map.
struct RasterizeOut {
    Var map;
    Tensor transmittance;
    Tensor coverage;
};
RasterizeOut rasterize(Var means, Var cov6, Var opacities, Var payload, const Camera& cam,
                       const RenderOptions& opts = {});

// Renders color and instance maps in one pass, differentiable w.r.t. every
// Gaussian attribute.
RenderResult render_maps(Tape& tape, const NeuralGaussianBatch& batch, const Camera& cam,
                         const RenderOptions& opts = {});

// Plain-tensor attribute bundle for non-trained content (teacher scenes,
// checkpoint-free rendering).
struct GaussianData {
    Tensor means;      // M×3
    Tensor rotations;  // M×4 unit quaternions
    Tensor scales;     // M×3 positive
    Tensor opacities;  // M×1
    Tensor payload;    // M×C
    int count() const { return means.defined() ? means.rows() : 0; }
};

// Correctness oracle: exact per-pixel full sort, every splat tested at every
// pixel, no early termination. Optionally accumulates per-group Σ Tσ weights
// (group id per Gaussian) into group_weights ((H*W)×n_groups).
FeatureMap brute_force_reference(const GaussianData& data, const Camera& cam,
                                 const std::vector<int>* group_ids = nullptr, int n_groups = 0,
                                 Tensor* group_weights = nullptr, Tensor* transmittance = nullptr);

} // namespace gala

#pragma once

#include "gala/camera.hpp"
#include "gala/ops.hpp"
#include "gala/rng.hpp"
#include "gala/tape.hpp"

#include <vector>

namespace gala {

// Anchor-based scene representation. Positions are fixed; features, scale
// factors and offsets are trainable.
struct AnchorSet {
    Tensor positions;         // N×3, fixed
    Parameter geo_features;   // N×d_g
    Parameter seg_features;   // N×d_seg
    Parameter log_scales;     // N×3, l = exp(log_scales) keeps l > 0
    Parameter offsets;        // N×(K*3)
    int count = 0;
    int offsets_per_anchor = 0;

    std::vector<Parameter*> geometry_params();      // f^g, offsets, scales
    std::vector<Parameter*> instance_params();      // f^s
};

// Jittered uniform grid over the bounding box [lo, hi]^3.
AnchorSet make_anchor_grid(int per_axis, const Vec3& lo, const Vec3& hi, int offsets_per_anchor,
                           int geo_dim, int seg_dim, RngStream& rng);

struct MlpHead {
    Parameter w1, b1, w2, b2;

    Var apply(Tape& tape, Var input) {
        Var h = ops::relu(ops::affine(input, tape.param(w1), tape.param(b1)));
        return ops::affine(h, tape.param(w2), tape.param(b2));
    }
};

// Two-layer perceptrons: four geometry heads fed with (f^g, distance, view
// direction) and an instance head fed with f^s alone.
struct AttributeDecoder {
    MlpHead opacity;   // -> K
    MlpHead color;     // -> K*3
    MlpHead rotation;  // -> K*4
    MlpHead scale;     // -> K*3
    MlpHead instance;  // -> K*d_ins
    int k = 3;
    int instance_dim = 16;
    int hidden = 32;

    std::vector<Parameter*> geometry_params();
    std::vector<Parameter*> instance_params();
};

AttributeDecoder make_attribute_decoder(int geo_dim, int seg_dim, int k, int instance_dim,
                                        int hidden, double init_scale_log, RngStream& rng);

// Per-Gaussian attributes as tape values; M = N*K rows each.
struct NeuralGaussianBatch {
    Var means;       // M×3
    Var opacities;   // M×1, in (0,1) via logistic squashing
    Var colors;      // M×3, in (0,1)
    Var rotations;   // M×4, unit quaternions
    Var scales;      // M×3, positive via exp
    Var features;    // M×d_ins, view independent
    std::vector<int> anchor_index; // anchor of origin, M entries
    int count = 0;
    bool degenerate_direction_flagged = false;
};

// Spawns K neural Gaussians per anchor (means = v + offset ∘ l) and decodes
// attributes from (f^g, δ, d⃗); instance features depend on f^s only. A camera
// center coinciding with an anchor gets direction (0,0,1) and sets the flag.
NeuralGaussianBatch spawn_gaussians(Tape& tape, AnchorSet& anchors, AttributeDecoder& decoder,
                                    const Vec3& camera_center);

// --- plain-tensor covariance utilities ---

// Unit-quaternion (w,x,y,z) to rotation matrix; input renormalized, zero
// quaternion rejected.
Mat3 quaternion_to_rotation(const std::array<double, 4>& q);

// Σ = R diag(s) diag(s) Rᵀ packed as [xx,xy,xz,yy,yz,zz]; scales must be > 0.
std::array<double, 6> build_covariance(const std::array<double, 4>& quat, const Vec3& scale);

// Tape op: per-row covariance from unit quaternions (M×4) and scales (M×3).
Var covariance_from_quat_scale(Var unit_quats, Var scales);

} // namespace gala

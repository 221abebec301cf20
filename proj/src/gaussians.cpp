#include "gala/gaussians.hpp"

#include "gala/errors.hpp"

#include <cmath>

namespace gala {

namespace {

Tensor xavier_init(int fan_in, int fan_out, RngStream& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (std::int64_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-bound, bound);
    return w;
}

MlpHead make_head(const std::string& name, int in_dim, int hidden, int out_dim, RngStream& rng) {
    MlpHead head;
    head.w1 = Parameter(name + ".w1", xavier_init(in_dim, hidden, rng));
    head.b1 = Parameter(name + ".b1", Tensor::zeros({1, hidden}));
    head.w2 = Parameter(name + ".w2", xavier_init(hidden, out_dim, rng));
    head.b2 = Parameter(name + ".b2", Tensor::zeros({1, out_dim}));
    return head;
}

void push_head(std::vector<Parameter*>& out, MlpHead& head) {
    out.push_back(&head.w1);
    out.push_back(&head.b1);
    out.push_back(&head.w2);
    out.push_back(&head.b2);
}

} // namespace

std::vector<Parameter*> AnchorSet::geometry_params() {
    return {&geo_features, &log_scales, &offsets};
}

std::vector<Parameter*> AnchorSet::instance_params() { return {&seg_features}; }

AnchorSet make_anchor_grid(int per_axis, const Vec3& lo, const Vec3& hi, int offsets_per_anchor,
                           int geo_dim, int seg_dim, RngStream& rng) {
    if (per_axis < 1) throw validation_error("make_anchor_grid: per_axis must be >= 1");
    const int n = per_axis * per_axis * per_axis;
    AnchorSet anchors;
    anchors.count = n;
    anchors.offsets_per_anchor = offsets_per_anchor;

    const Vec3 extent = hi - lo;
    const double step_x = extent.x / per_axis;
    const double step_y = extent.y / per_axis;
    const double step_z = extent.z / per_axis;

    Tensor pos({n, 3});
    int row = 0;
    for (int ix = 0; ix < per_axis; ++ix)
        for (int iy = 0; iy < per_axis; ++iy)
            for (int iz = 0; iz < per_axis; ++iz) {
                pos(row, 0) = lo.x + (ix + 0.5) * step_x + rng.uniform(-0.25, 0.25) * step_x;
                pos(row, 1) = lo.y + (iy + 0.5) * step_y + rng.uniform(-0.25, 0.25) * step_y;
                pos(row, 2) = lo.z + (iz + 0.5) * step_z + rng.uniform(-0.25, 0.25) * step_z;
                ++row;
            }
    anchors.positions = std::move(pos);

    Tensor geo({n, geo_dim});
    for (std::int64_t i = 0; i < geo.size(); ++i) geo.at(i) = rng.normal(0.0, 0.1);
    anchors.geo_features = Parameter("anchors.geo_features", std::move(geo));

    Tensor seg({n, seg_dim});
    for (std::int64_t i = 0; i < seg.size(); ++i) seg.at(i) = rng.normal(0.0, 0.1);
    anchors.seg_features = Parameter("anchors.seg_features", std::move(seg));

    const double mean_step = (step_x + step_y + step_z) / 3.0;
    anchors.log_scales =
        Parameter("anchors.log_scales", Tensor::full({n, 3}, std::log(mean_step)));

    Tensor off({n, offsets_per_anchor * 3});
    for (std::int64_t i = 0; i < off.size(); ++i) off.at(i) = rng.normal(0.0, 0.15);
    anchors.offsets = Parameter("anchors.offsets", std::move(off));
    return anchors;
}

std::vector<Parameter*> AttributeDecoder::geometry_params() {
    std::vector<Parameter*> out;
    push_head(out, opacity);
    push_head(out, color);
    push_head(out, rotation);
    push_head(out, scale);
    return out;
}

std::vector<Parameter*> AttributeDecoder::instance_params() {
    std::vector<Parameter*> out;
    push_head(out, instance);
    return out;
}

AttributeDecoder make_attribute_decoder(int geo_dim, int seg_dim, int k, int instance_dim,
                                        int hidden, double init_scale_log, RngStream& rng) {
    AttributeDecoder dec;
    dec.k = k;
    dec.instance_dim = instance_dim;
    dec.hidden = hidden;
    const int geo_in = geo_dim + 1 + 3; // features, distance, direction
    dec.opacity = make_head("decoder.opacity", geo_in, hidden, k, rng);
    dec.color = make_head("decoder.color", geo_in, hidden, k * 3, rng);
    dec.rotation = make_head("decoder.rotation", geo_in, hidden, k * 4, rng);
    dec.scale = make_head("decoder.scale", geo_in, hidden, k * 3, rng);
    dec.instance = make_head("decoder.instance", seg_dim, hidden, k * instance_dim, rng);
    // Bias initialization: start fairly transparent and at a sensible size.
    for (int i = 0; i < k; ++i) dec.opacity.b2.value.at(i) = -2.1972245773362196; // logit(0.1)
    for (int i = 0; i < k * 3; ++i) dec.scale.b2.value.at(i) = init_scale_log;
    return dec;
}

NeuralGaussianBatch spawn_gaussians(Tape& tape, AnchorSet& anchors, AttributeDecoder& decoder,
                                    const Vec3& camera_center) {
    const int n = anchors.count;
    const int k = decoder.k;

    // View geometry per anchor: distance and unit direction (constants; anchor
    // positions are not trained).
    Tensor dist({n, 1});
    Tensor dirs({n, 3});
    bool flagged = false;
    for (int i = 0; i < n; ++i) {
        const Vec3 v{anchors.positions(i, 0), anchors.positions(i, 1), anchors.positions(i, 2)};
        const Vec3 d = v - camera_center;
        const double len = d.norm();
        dist(i, 0) = len;
        if (len < 1e-12) {
            flagged = true;
            dirs(i, 0) = 0.0;
            dirs(i, 1) = 0.0;
            dirs(i, 2) = 1.0;
        } else {
            dirs(i, 0) = d.x / len;
            dirs(i, 1) = d.y / len;
            dirs(i, 2) = d.z / len;
        }
    }

    Var geo_in = ops::concat_cols({tape.param(anchors.geo_features), tape.constant(std::move(dist)),
                                   tape.constant(std::move(dirs))});

    Var raw_opacity = decoder.opacity.apply(tape, geo_in);     // N×K
    Var raw_color = decoder.color.apply(tape, geo_in);         // N×(K*3)
    Var raw_rotation = decoder.rotation.apply(tape, geo_in);   // N×(K*4)
    Var raw_scale = decoder.scale.apply(tape, geo_in);         // N×(K*3)
    Var raw_instance = decoder.instance.apply(tape, tape.param(anchors.seg_features));

    const int m = n * k;
    NeuralGaussianBatch batch;
    batch.count = m;
    batch.degenerate_direction_flagged = flagged;
    batch.anchor_index.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i)
        for (int kk = 0; kk < k; ++kk) batch.anchor_index[static_cast<std::size_t>(i * k + kk)] = i;

    // μ_{i,k} = v_i + O_{i,k} ∘ l_i (elementwise product).
    Var offsets = ops::reshape(tape.param(anchors.offsets), {m, 3});
    Var l = ops::exp_elem(tape.param(anchors.log_scales));          // N×3 > 0
    Var l_rep = ops::repeat_rows(l, k);                             // M×3
    Var v_rep = tape.constant([&] {
        Tensor rep({m, 3});
        for (int i = 0; i < n; ++i)
            for (int kk = 0; kk < k; ++kk)
                for (int j = 0; j < 3; ++j) rep(i * k + kk, j) = anchors.positions(i, j);
        return rep;
    }());
    batch.means = ops::add(v_rep, ops::mul(offsets, l_rep));

    batch.opacities = ops::sigmoid(ops::reshape(raw_opacity, {m, 1}));
    batch.colors = ops::sigmoid(ops::reshape(raw_color, {m, 3}));
    batch.scales = ops::exp_elem(ops::reshape(raw_scale, {m, 3}));

    // Shift toward the identity quaternion before normalizing so the zero-raw
    // case stays well-posed.
    Tensor qbias({1, 4});
    qbias(0, 0) = 1.0;
    Var shifted = ops::add_rowvec(ops::reshape(raw_rotation, {m, 4}), tape.constant(std::move(qbias)));
    batch.rotations = ops::rows_normalize(shifted, 1e-12, /*strict=*/true);

    batch.features = ops::reshape(raw_instance, {m, decoder.instance_dim});
    return batch;
}

Mat3 quaternion_to_rotation(const std::array<double, 4>& q) {
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (norm < 1e-12) throw validation_error("quaternion_to_rotation: zero quaternion");
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Mat3 r;
    r(0, 0) = 1.0 - 2.0 * (y * y + z * z);
    r(0, 1) = 2.0 * (x * y - w * z);
    r(0, 2) = 2.0 * (x * z + w * y);
    r(1, 0) = 2.0 * (x * y + w * z);
    r(1, 1) = 1.0 - 2.0 * (x * x + z * z);
    r(1, 2) = 2.0 * (y * z - w * x);
    r(2, 0) = 2.0 * (x * z - w * y);
    r(2, 1) = 2.0 * (y * z + w * x);
    r(2, 2) = 1.0 - 2.0 * (x * x + y * y);
    return r;
}

std::array<double, 6> build_covariance(const std::array<double, 4>& quat, const Vec3& scale) {
    if (scale.x <= 0.0 || scale.y <= 0.0 || scale.z <= 0.0)
        throw validation_error("build_covariance: scales must be positive");
    const Mat3 r = quaternion_to_rotation(quat);
    // L = R diag(s); Σ = L Lᵀ.
    double l[3][3];
    const double s[3] = {scale.x, scale.y, scale.z};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) l[i][j] = r(i, j) * s[j];
    std::array<double, 6> cov{};
    int idx = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            double v = 0.0;
            for (int kk = 0; kk < 3; ++kk) v += l[i][kk] * l[j][kk];
            cov[static_cast<std::size_t>(idx++)] = v;
        }
    return cov;
}

Var covariance_from_quat_scale(Var unit_quats, Var scales) {
    const Tensor& q = unit_quats.tape->value(unit_quats);
    const Tensor& s = scales.tape->value(scales);
    if (q.ndim() != 2 || q.cols() != 4)
        throw validation_error("covariance_from_quat_scale: quaternions must be M×4");
    if (s.ndim() != 2 || s.cols() != 3 || s.rows() != q.rows())
        throw validation_error("covariance_from_quat_scale: scales must be M×3");
    const int m = q.rows();

    Tensor out({m, 6});
    for (int i = 0; i < m; ++i) {
        const std::array<double, 4> qi{q(i, 0), q(i, 1), q(i, 2), q(i, 3)};
        const Vec3 si{s(i, 0), s(i, 1), s(i, 2)};
        if (si.x <= 0.0 || si.y <= 0.0 || si.z <= 0.0)
            throw validation_error("covariance_from_quat_scale: nonpositive scale at row " +
                                   std::to_string(i));
        const auto cov = build_covariance(qi, si);
        for (int j = 0; j < 6; ++j) out(i, j) = cov[static_cast<std::size_t>(j)];
    }

    Tensor qs = q, ss = s;
    return unit_quats.tape->emit(
        std::move(out), {unit_quats, scales},
        [unit_quats, scales, qs, ss, m](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gq = t.grad_buffer(unit_quats.id);
            Tensor& gs = t.grad_buffer(scales.id);
            // Packed index -> (row, col) of the symmetric matrix.
            static constexpr int kRow[6] = {0, 0, 0, 1, 1, 2};
            static constexpr int kCol[6] = {0, 1, 2, 1, 2, 2};
            for (int i = 0; i < m; ++i) {
                const double w = qs(i, 0), x = qs(i, 1), y = qs(i, 2), z = qs(i, 3);
                const Mat3 r = quaternion_to_rotation({w, x, y, z});
                const double sv[3] = {ss(i, 0), ss(i, 1), ss(i, 2)};
                double l[3][3];
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) l[a][b] = r(a, b) * sv[b];
                // gL from the packed gradient: cov_p = Σ_k L[rp][k] L[cp][k].
                double gl[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
                for (int p = 0; p < 6; ++p) {
                    const double gp = g(i, p);
                    if (gp == 0.0) continue;
                    const int a = kRow[p], b = kCol[p];
                    for (int kk = 0; kk < 3; ++kk) {
                        gl[a][kk] += gp * l[b][kk];
                        gl[b][kk] += gp * l[a][kk];
                    }
                }
                // Scale and rotation chains: L = R diag(s).
                double gr[3][3];
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) {
                        gr[a][b] = gl[a][b] * sv[b];
                        gs(i, b) += gl[a][b] * r(a, b);
                    }
                // dR/dq for q = (w,x,y,z) assumed unit.
                const double dw[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
                const double dx[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
                const double dy[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
                const double dz[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
                double acc_w = 0.0, acc_x = 0.0, acc_y = 0.0, acc_z = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) {
                        const double gv = gr[a][b];
                        const int p = a * 3 + b;
                        acc_w += gv * dw[p];
                        acc_x += gv * dx[p];
                        acc_y += gv * dy[p];
                        acc_z += gv * dz[p];
                    }
                gq(i, 0) += acc_w;
                gq(i, 1) += acc_x;
                gq(i, 2) += acc_y;
                gq(i, 3) += acc_z;
            }
        },
        "covariance_from_quat_scale");
}

} // namespace gala

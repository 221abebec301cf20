#include "gala/rasterizer.hpp"

#include "gala/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <thread>

namespace gala {

namespace {

struct Projected {
    Splat2D splat;
    int row = -1; // original gaussian row
};

// Projection shared by the fast path; the math itself is pinned by the
// module's analytic unit tests.
std::optional<Splat2D> project_impl(const Vec3& mean, const std::array<double, 6>& cov3,
                                    double opacity, const Camera& cam, int payload_row) {
    const Vec3 t = cam.to_camera(mean);
    if (t.z <= kNearPlane) return std::nullopt;

    const double inv_z = 1.0 / t.z;
    Splat2D s;
    s.mean_x = cam.fx * t.x * inv_z + cam.cx;
    s.mean_y = cam.fy * t.y * inv_z + cam.cy;
    s.depth = t.z;
    s.opacity = opacity;
    s.payload = payload_row;

    // J W Σ Wᵀ Jᵀ with J the projection Jacobian at the mean.
    const Mat3& w = cam.rot;
    double sigma[3][3] = {{cov3[0], cov3[1], cov3[2]},
                          {cov3[1], cov3[3], cov3[4]},
                          {cov3[2], cov3[4], cov3[5]}};
    double m3[3][3]; // W Σ Wᵀ
    {
        double ws[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += w(i, k) * sigma[k][j];
                ws[i][j] = acc;
            }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += ws[i][k] * w(j, k);
                m3[i][j] = acc;
            }
    }
    const double j00 = cam.fx * inv_z;
    const double j02 = -cam.fx * t.x * inv_z * inv_z;
    const double j11 = cam.fy * inv_z;
    const double j12 = -cam.fy * t.y * inv_z * inv_z;
    // rows of J·M
    const double r0[3] = {j00 * m3[0][0] + j02 * m3[2][0], j00 * m3[0][1] + j02 * m3[2][1],
                          j00 * m3[0][2] + j02 * m3[2][2]};
    const double r1[3] = {j11 * m3[1][0] + j12 * m3[2][0], j11 * m3[1][1] + j12 * m3[2][1],
                          j11 * m3[1][2] + j12 * m3[2][2]};
    s.cov.a = r0[0] * j00 + r0[2] * j02 + kCovRegularization;
    s.cov.b = r0[1] * j11 + r0[2] * j12;
    s.cov.c = r1[1] * j11 + r1[2] * j12 + kCovRegularization;
    return s;
}

double splat_sigma(const Splat2D& s, double px, double py) {
    const double det = s.cov.det();
    if (det <= 0.0) throw numeric_error("evaluate_opacity: singular screen covariance");
    const double dx = px - s.mean_x;
    const double dy = py - s.mean_y;
    const double q = (s.cov.c * dx * dx - 2.0 * s.cov.b * dx * dy + s.cov.a * dy * dy) / det;
    if (q > kCutoffQ) return 0.0;
    return s.opacity * std::exp(-0.5 * q);
}

struct SortedScene {
    std::vector<Projected> splats; // ascending (depth, row)
};

SortedScene project_and_sort(const Tensor& means, const Tensor& cov6, const Tensor& opac,
                             const Camera& cam) {
    SortedScene scene;
    const int m = means.defined() ? means.rows() : 0;
    scene.splats.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const Vec3 mu{means(i, 0), means(i, 1), means(i, 2)};
        const std::array<double, 6> c3{cov6(i, 0), cov6(i, 1), cov6(i, 2),
                                       cov6(i, 3), cov6(i, 4), cov6(i, 5)};
        auto s = project_impl(mu, c3, opac(i, 0), cam, i);
        if (!s) continue;
        scene.splats.push_back(Projected{*s, i});
    }
    std::sort(scene.splats.begin(), scene.splats.end(), [](const Projected& a, const Projected& b) {
        if (a.splat.depth != b.splat.depth) return a.splat.depth < b.splat.depth;
        return a.row < b.row;
    });
    return scene;
}

// Pixel-center candidate lists from the 3-sigma bounding box of each splat,
// kept in global depth order.
std::vector<std::vector<int>> bin_splats(const SortedScene& scene, const Camera& cam) {
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(cam.width) *
                                       static_cast<std::size_t>(cam.height));
    for (int si = 0; si < static_cast<int>(scene.splats.size()); ++si) {
        const Splat2D& s = scene.splats[static_cast<std::size_t>(si)].splat;
        const double rx = 3.0 * std::sqrt(std::max(s.cov.a, 0.0));
        const double ry = 3.0 * std::sqrt(std::max(s.cov.c, 0.0));
        // pixels whose center (x+0.5, y+0.5) lies inside the box
        int x0 = static_cast<int>(std::ceil(s.mean_x - rx - 0.5));
        int x1 = static_cast<int>(std::floor(s.mean_x + rx - 0.5));
        int y0 = static_cast<int>(std::ceil(s.mean_y - ry - 0.5));
        int y1 = static_cast<int>(std::floor(s.mean_y + ry - 0.5));
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        x1 = std::min(x1, cam.width - 1);
        y1 = std::min(y1, cam.height - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                bins[static_cast<std::size_t>(y) * cam.width + x].push_back(si);
    }
    return bins;
}

struct PixelWalk {
    // scratch reused across pixels
    std::vector<double> sigma;
    std::vector<double> transmittance;
    std::vector<int> splat_ids;
};

// Front-to-back walk shared by forward and backward so truncation matches.
template <typename CandidateRange>
void walk_pixel(const SortedScene& scene, const CandidateRange& candidates, double px, double py,
                double early_stop_t, PixelWalk& walk) {
    walk.sigma.clear();
    walk.transmittance.clear();
    walk.splat_ids.clear();
    double t = 1.0;
    for (int si : candidates) {
        const Splat2D& s = scene.splats[static_cast<std::size_t>(si)].splat;
        const double sig = splat_sigma(s, px, py);
        if (sig == 0.0) continue;
        walk.sigma.push_back(sig);
        walk.transmittance.push_back(t);
        walk.splat_ids.push_back(si);
        t *= (1.0 - sig);
        if (early_stop_t > 0.0 && t < early_stop_t) break;
    }
    walk.transmittance.push_back(t); // final T appended
}

struct AllCandidates {
    int n;
    struct Iter {
        int v;
        int operator*() const { return v; }
        Iter& operator++() {
            ++v;
            return *this;
        }
        bool operator!=(const Iter& o) const { return v != o.v; }
    };
    Iter begin() const { return {0}; }
    Iter end() const { return {n}; }
};

} // namespace

std::optional<Splat2D> project_gaussian(const Vec3& mean, const std::array<double, 6>& cov3,
                                        double opacity, const Camera& cam, int payload_row) {
    return project_impl(mean, cov3, opacity, cam, payload_row);
}

double evaluate_opacity(const Splat2D& splat, double px, double py) {
    return splat_sigma(splat, px, py);
}

double composite_pixel(const std::vector<Splat2D>& sorted, const Tensor& payloads, double px,
                       double py, double early_stop_t, double* out) {
#ifndef NDEBUG
    for (std::size_t i = 1; i < sorted.size(); ++i)
        assert(sorted[i - 1].depth <= sorted[i].depth && "composite_pixel: splats must be depth-sorted");
#endif
    const int channels = payloads.defined() ? payloads.cols() : 0;
    for (int c = 0; c < channels; ++c) out[c] = 0.0;
    double t = 1.0;
    for (const Splat2D& s : sorted) {
        const double sig = splat_sigma(s, px, py);
        if (sig == 0.0) continue;
        const double w = t * sig;
        for (int c = 0; c < channels; ++c) out[c] += w * payloads(s.payload, c);
        t *= (1.0 - sig);
        if (early_stop_t > 0.0 && t < early_stop_t) break;
    }
    return t;
}

RasterizeOut rasterize(Var means, Var cov6, Var opacities, Var payload, const Camera& cam,
                       const RenderOptions& opts) {
    validate_camera(cam);
    Tape& tape = *means.tape;
    const Tensor mv = tape.value(means);
    const Tensor cv = tape.value(cov6);
    const Tensor av = tape.value(opacities);
    const Tensor pv = tape.value(payload);
    const int m = mv.defined() && mv.size() > 0 ? mv.rows() : 0;
    if (m > 0) {
        if (cv.rows() != m || cv.cols() != 6) throw validation_error("rasterize: cov6 must be M×6");
        if (av.rows() != m || av.cols() != 1) throw validation_error("rasterize: opacities must be M×1");
        if (pv.rows() != m) throw validation_error("rasterize: payload must have M rows");
    }
    const int channels = m > 0 ? pv.cols() : (pv.defined() ? pv.cols() : 0);
    const int hw = cam.height * cam.width;

    auto scene = std::make_shared<SortedScene>(project_and_sort(mv, cv, av, cam));
    auto bins = std::make_shared<std::vector<std::vector<int>>>();
    if (!opts.exact) *bins = bin_splats(*scene, cam);
    const double early_stop = (opts.exact || !opts.early_stop) ? 0.0 : kEarlyStopT;

    Tensor map({hw, channels});
    Tensor trans({hw, 1});
    Tensor cover({hw, 1});

    const int n_splats = static_cast<int>(scene->splats.size());
    auto run_rows = [&](int y_begin, int y_end) {
        PixelWalk walk;
        for (int y = y_begin; y < y_end; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const int pix = y * cam.width + x;
                const double px = x + 0.5, py = y + 0.5;
                if (opts.exact)
                    walk_pixel(*scene, AllCandidates{n_splats}, px, py, early_stop, walk);
                else
                    walk_pixel(*scene, (*bins)[static_cast<std::size_t>(pix)], px, py, early_stop, walk);
                double* out_row = map.data() + static_cast<std::size_t>(pix) * channels;
                for (std::size_t k = 0; k < walk.splat_ids.size(); ++k) {
                    const double w = walk.transmittance[k] * walk.sigma[k];
                    const Projected& pr = scene->splats[static_cast<std::size_t>(walk.splat_ids[k])];
                    const double* prow = pv.data() + static_cast<std::size_t>(pr.row) * channels;
                    for (int c = 0; c < channels; ++c) out_row[c] += w * prow[c];
                }
                const double t_final = walk.transmittance.back();
                trans.at(pix) = t_final;
                cover.at(pix) = 1.0 - t_final;
            }
        }
    };

    if (opts.threads > 1 && cam.height > 1) {
        const int nt = std::min(opts.threads, cam.height);
        std::vector<std::thread> pool;
        const int rows_per = (cam.height + nt - 1) / nt;
        for (int ti = 0; ti < nt; ++ti) {
            const int y0 = ti * rows_per;
            const int y1 = std::min(cam.height, y0 + rows_per);
            if (y0 >= y1) break;
            pool.emplace_back(run_rows, y0, y1);
        }
        for (auto& th : pool) th.join();
    } else {
        run_rows(0, cam.height);
    }

    map.require_finite("rasterize");

    const bool exact = opts.exact;
    const Camera cam_copy = cam;
    Var map_var = tape.emit(
        map, {means, cov6, opacities, payload},
        [means, cov6, opacities, payload, scene, bins, exact, cam_copy, mv, cv, av, pv, channels,
         early_stop](Tape& t, int id) {
            const Tensor& gmap = t.grad_buffer(id);
            Tensor& g_means = t.grad_buffer(means.id);
            Tensor& g_cov6 = t.grad_buffer(cov6.id);
            Tensor& g_opac = t.grad_buffer(opacities.id);
            Tensor& g_payload = t.grad_buffer(payload.id);

            const int n_splats = static_cast<int>(scene->splats.size());
            if (n_splats == 0) return;
            // Per-splat 2-D accumulators over all pixels.
            std::vector<double> g_mean2d(static_cast<std::size_t>(n_splats) * 2, 0.0);
            std::vector<double> g_cov2(static_cast<std::size_t>(n_splats) * 3, 0.0);

            PixelWalk walk;
            std::vector<double> suffix(static_cast<std::size_t>(channels));
            for (int y = 0; y < cam_copy.height; ++y) {
                for (int x = 0; x < cam_copy.width; ++x) {
                    const int pix = y * cam_copy.width + x;
                    const double* g_out = gmap.data() + static_cast<std::size_t>(pix) * channels;
                    bool any = false;
                    for (int c = 0; c < channels; ++c)
                        if (g_out[c] != 0.0) { any = true; break; }
                    if (!any) continue;
                    const double px = x + 0.5, py = y + 0.5;
                    if (exact)
                        walk_pixel(*scene, AllCandidates{n_splats}, px, py, early_stop, walk);
                    else
                        walk_pixel(*scene, (*bins)[static_cast<std::size_t>(pix)], px, py,
                                   early_stop, walk);
                    const int hits = static_cast<int>(walk.splat_ids.size());
                    if (hits == 0) continue;
                    std::fill(suffix.begin(), suffix.end(), 0.0);
                    // Back-to-front: suffix holds Σ_{j>i} (Π_{i<k<j}(1-σ_k)) σ_j p_j,
                    // so dσ_i gets T_i (p_i - suffix) without dividing by (1-σ).
                    for (int k = hits - 1; k >= 0; --k) {
                        const double sig = walk.sigma[static_cast<std::size_t>(k)];
                        const double t_i = walk.transmittance[static_cast<std::size_t>(k)];
                        const int si = walk.splat_ids[static_cast<std::size_t>(k)];
                        const Projected& pr = scene->splats[static_cast<std::size_t>(si)];
                        const double* prow = pv.data() + static_cast<std::size_t>(pr.row) * channels;
                        double* gprow = g_payload.data() + static_cast<std::size_t>(pr.row) * channels;
                        double g_sigma = 0.0;
                        for (int c = 0; c < channels; ++c) {
                            const double g = g_out[c];
                            if (g == 0.0) continue;
                            g_sigma += g * t_i * (prow[c] - suffix[static_cast<std::size_t>(c)]);
                            gprow[c] += g * t_i * sig;
                        }
                        for (int c = 0; c < channels; ++c)
                            suffix[static_cast<std::size_t>(c)] =
                                sig * prow[c] + (1.0 - sig) * suffix[static_cast<std::size_t>(c)];
                        if (g_sigma == 0.0) continue;
                        // σ = α e^{-q/2}: chain into α, screen mean, screen covariance.
                        const Splat2D& s = pr.splat;
                        const double alpha = s.opacity;
                        const double e = sig / alpha;
                        g_opac.at(pr.row) += g_sigma * e;
                        const double dx = px - s.mean_x;
                        const double dy = py - s.mean_y;
                        const double det = s.cov.det();
                        const double q =
                            (s.cov.c * dx * dx - 2.0 * s.cov.b * dx * dy + s.cov.a * dy * dy) / det;
                        const double g_q = -0.5 * sig * g_sigma;
                        // ∂q/∂mean = -2 Σ'⁻¹ d since d = u - mean
                        const double lam_a = s.cov.c / det, lam_b = -s.cov.b / det,
                                     lam_c = s.cov.a / det;
                        const double qx = lam_a * dx + lam_b * dy;
                        const double qy = lam_b * dx + lam_c * dy;
                        g_mean2d[static_cast<std::size_t>(si) * 2 + 0] -= g_q * 2.0 * qx;
                        g_mean2d[static_cast<std::size_t>(si) * 2 + 1] -= g_q * 2.0 * qy;
                        // ∂q/∂(a,b,c) with q = (c dx² - 2b dxdy + a dy²)/det
                        g_cov2[static_cast<std::size_t>(si) * 3 + 0] +=
                            g_q * (dy * dy - q * s.cov.c) / det;
                        g_cov2[static_cast<std::size_t>(si) * 3 + 1] +=
                            g_q * (-2.0 * dx * dy + 2.0 * q * s.cov.b) / det;
                        g_cov2[static_cast<std::size_t>(si) * 3 + 2] +=
                            g_q * (dx * dx - q * s.cov.a) / det;
                    }
                }
            }

            // Chain screen-space gradients to 3-D attributes.
            const Mat3& w = cam_copy.rot;
            for (int si = 0; si < n_splats; ++si) {
                const Projected& pr = scene->splats[static_cast<std::size_t>(si)];
                const int row = pr.row;
                const double gmx = g_mean2d[static_cast<std::size_t>(si) * 2 + 0];
                const double gmy = g_mean2d[static_cast<std::size_t>(si) * 2 + 1];
                const double ga = g_cov2[static_cast<std::size_t>(si) * 3 + 0];
                const double gb = g_cov2[static_cast<std::size_t>(si) * 3 + 1];
                const double gc = g_cov2[static_cast<std::size_t>(si) * 3 + 2];
                if (gmx == 0.0 && gmy == 0.0 && ga == 0.0 && gb == 0.0 && gc == 0.0) continue;

                const Vec3 mu{mv(row, 0), mv(row, 1), mv(row, 2)};
                const Vec3 tcam = cam_copy.to_camera(mu);
                const double inv_z = 1.0 / tcam.z;
                const double j00 = cam_copy.fx * inv_z;
                const double j02 = -cam_copy.fx * tcam.x * inv_z * inv_z;
                const double j11 = cam_copy.fy * inv_z;
                const double j12 = -cam_copy.fy * tcam.y * inv_z * inv_z;

                double sigma3[3][3] = {{cv(row, 0), cv(row, 1), cv(row, 2)},
                                       {cv(row, 1), cv(row, 3), cv(row, 4)},
                                       {cv(row, 2), cv(row, 4), cv(row, 5)}};
                double m3[3][3];
                {
                    double ws[3][3];
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double acc = 0.0;
                            for (int k = 0; k < 3; ++k) acc += w(i, k) * sigma3[k][j];
                            ws[i][j] = acc;
                        }
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double acc = 0.0;
                            for (int k = 0; k < 3; ++k) acc += ws[i][k] * w(j, k);
                            m3[i][j] = acc;
                        }
                }

                // G = [[ga, gb/2], [gb/2, gc]]
                const double g00 = ga, g01 = 0.5 * gb, g11 = gc;
                // gM3 = Jᵀ G J, with J rows (j00, 0, j02) and (0, j11, j12).
                const double jr0[3] = {j00, 0.0, j02};
                const double jr1[3] = {0.0, j11, j12};
                double gm3[3][3];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        gm3[i][j] = jr0[i] * (g00 * jr0[j] + g01 * jr1[j]) +
                                    jr1[i] * (g01 * jr0[j] + g11 * jr1[j]);
                // gΣ = Wᵀ gM3 W; pack with doubled off-diagonals.
                double gsig[3][3];
                {
                    double wt_gm[3][3];
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double acc = 0.0;
                            for (int k = 0; k < 3; ++k) acc += w(k, i) * gm3[k][j];
                            wt_gm[i][j] = acc;
                        }
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double acc = 0.0;
                            for (int k = 0; k < 3; ++k) acc += wt_gm[i][k] * w(k, j);
                            gsig[i][j] = acc;
                        }
                }
                g_cov6(row, 0) += gsig[0][0];
                g_cov6(row, 1) += gsig[0][1] + gsig[1][0];
                g_cov6(row, 2) += gsig[0][2] + gsig[2][0];
                g_cov6(row, 3) += gsig[1][1];
                g_cov6(row, 4) += gsig[1][2] + gsig[2][1];
                g_cov6(row, 5) += gsig[2][2];

                // gJ = 2 G J M3 — only four J entries exist.
                const double jm0[3] = {j00 * m3[0][0] + j02 * m3[2][0],
                                       j00 * m3[0][1] + j02 * m3[2][1],
                                       j00 * m3[0][2] + j02 * m3[2][2]};
                const double jm1[3] = {j11 * m3[1][0] + j12 * m3[2][0],
                                       j11 * m3[1][1] + j12 * m3[2][1],
                                       j11 * m3[1][2] + j12 * m3[2][2]};
                const double gj00 = 2.0 * (g00 * jm0[0] + g01 * jm1[0]);
                const double gj02 = 2.0 * (g00 * jm0[2] + g01 * jm1[2]);
                const double gj11 = 2.0 * (g01 * jm0[1] + g11 * jm1[1]);
                const double gj12 = 2.0 * (g01 * jm0[2] + g11 * jm1[2]);

                // Camera-space position gradient: projection path + J path.
                const double fx = cam_copy.fx, fy = cam_copy.fy;
                double gt_x = gmx * fx * inv_z;
                double gt_y = gmy * fy * inv_z;
                double gt_z = -gmx * fx * tcam.x * inv_z * inv_z - gmy * fy * tcam.y * inv_z * inv_z;
                gt_x += gj02 * (-fx * inv_z * inv_z);
                gt_y += gj12 * (-fy * inv_z * inv_z);
                gt_z += gj00 * (-fx * inv_z * inv_z) + gj11 * (-fy * inv_z * inv_z) +
                        gj02 * (2.0 * fx * tcam.x * inv_z * inv_z * inv_z) +
                        gj12 * (2.0 * fy * tcam.y * inv_z * inv_z * inv_z);

                g_means(row, 0) += w(0, 0) * gt_x + w(1, 0) * gt_y + w(2, 0) * gt_z;
                g_means(row, 1) += w(0, 1) * gt_x + w(1, 1) * gt_y + w(2, 1) * gt_z;
                g_means(row, 2) += w(0, 2) * gt_x + w(1, 2) * gt_y + w(2, 2) * gt_z;
            }
        },
        "rasterize");

    RasterizeOut out;
    out.map = map_var;
    out.transmittance = std::move(trans);
    out.coverage = std::move(cover);
    return out;
}

RenderResult render_maps(Tape& tape, const NeuralGaussianBatch& batch, const Camera& cam,
                         const RenderOptions& opts) {
    RenderResult res;
    if (batch.count == 0) {
        const int hw = cam.height * cam.width;
        res.color = tape.constant(Tensor({hw, 3}));
        res.instance = tape.constant(Tensor({hw, 1}));
        res.transmittance = Tensor::full({hw, 1}, 1.0);
        res.coverage = Tensor({hw, 1});
        return res;
    }
    Var cov6 = covariance_from_quat_scale(batch.rotations, batch.scales);
    Var payload = ops::concat_cols({batch.colors, batch.features});
    RasterizeOut raster = rasterize(batch.means, cov6, batch.opacities, payload, cam, opts);
    const int d_ins = tape.value(batch.features).cols();
    res.color = ops::slice_cols(raster.map, 0, 3);
    res.instance = ops::slice_cols(raster.map, 3, 3 + d_ins);
    res.transmittance = std::move(raster.transmittance);
    res.coverage = std::move(raster.coverage);
    return res;
}

FeatureMap brute_force_reference(const GaussianData& data, const Camera& cam,
                                 const std::vector<int>* group_ids, int n_groups,
                                 Tensor* group_weights, Tensor* transmittance) {
    validate_camera(cam);
    const int hw = cam.height * cam.width;
    const int channels = data.payload.defined() ? data.payload.cols() : 0;
    FeatureMap out;
    out.height = cam.height;
    out.width = cam.width;
    out.values = Tensor({hw, std::max(channels, 1)});
    if (group_weights) *group_weights = Tensor({hw, std::max(n_groups, 1)});
    if (transmittance) *transmittance = Tensor::full({hw, 1}, 1.0);

    const int m = data.count();
    std::vector<Splat2D> splats;
    std::vector<int> rows;
    for (int i = 0; i < m; ++i) {
        const std::array<double, 4> q{data.rotations(i, 0), data.rotations(i, 1),
                                      data.rotations(i, 2), data.rotations(i, 3)};
        const Vec3 s{data.scales(i, 0), data.scales(i, 1), data.scales(i, 2)};
        const auto cov3 = build_covariance(q, s);
        const Vec3 mu{data.means(i, 0), data.means(i, 1), data.means(i, 2)};
        auto sp = project_gaussian(mu, cov3, data.opacities(i, 0), cam, i);
        if (!sp) continue;
        splats.push_back(*sp);
        rows.push_back(i);
    }
    // exact full sort, stable tie-break on the original row
    std::vector<int> order(splats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = splats[static_cast<std::size_t>(a)].depth;
        const double db = splats[static_cast<std::size_t>(b)].depth;
        if (da != db) return da < db;
        return rows[static_cast<std::size_t>(a)] < rows[static_cast<std::size_t>(b)];
    });

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const int pix = y * cam.width + x;
            const double px = x + 0.5, py = y + 0.5;
            double t = 1.0;
            double* out_row = out.values.data() + static_cast<std::size_t>(pix) * out.values.cols();
            for (int oi : order) {
                const Splat2D& s = splats[static_cast<std::size_t>(oi)];
                const double sig = evaluate_opacity(s, px, py);
                if (sig == 0.0) continue;
                const double wgt = t * sig;
                for (int c = 0; c < channels; ++c) out_row[c] += wgt * data.payload(s.payload, c);
                if (group_weights && group_ids) {
                    const int g = (*group_ids)[static_cast<std::size_t>(s.payload)];
                    if (g >= 0 && g < n_groups) (*group_weights)(pix, g) += wgt;
                }
                t *= (1.0 - sig);
            }
            if (transmittance) (*transmittance)(pix, 0) = t;
        }
    }
    return out;
}

} // namespace gala

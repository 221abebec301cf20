#include "gala/ops.hpp"

#include "gala/errors.hpp"

#include <cmath>
#include <cstring>

namespace gala {
namespace ops {

namespace {

const Tensor& val(Var v) { return v.tape->value(v); }

void require_same_shape(Var a, Var b, const char* op) {
    if (!val(a).same_shape(val(b)))
        throw validation_error(std::string(op) + ": shape mismatch " + shape_string(val(a).shape()) +
                               " vs " + shape_string(val(b).shape()));
}

void require_2d(Var a, const char* op) {
    if (val(a).ndim() != 2)
        throw validation_error(std::string(op) + ": expected 2-D tensor, got " + shape_string(val(a).shape()));
}

// a·b with a naive but cache-friendly i-k-j kernel; good enough at desk scale.
void matmul_raw(const double* a, const double* b, double* out, int m, int k, int n) {
    std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* orow = out + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out += aᵀ·b, a is m×k, b is m×n, out is k×n.
void matmul_at_b_accum(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* orow = out + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out += a·bᵀ, a is m×k, b is n×k, out is m×n.
void matmul_a_bt_accum(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* orow = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            orow[j] += s;
        }
    }
}

template <typename Fwd, typename Dfn>
Var unary_elementwise(Var a, Fwd f, Dfn dfn, const char* name) {
    const Tensor& x = val(a);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = f(x.at(i));
    Tensor saved_in = x;
    Tensor saved_out = out;
    return a.tape->emit(
        std::move(out), {a},
        [a, saved_in, saved_out, dfn](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& ga = t.grad_buffer(a.id);
            for (std::int64_t i = 0; i < g.size(); ++i)
                ga.at(i) += g.at(i) * dfn(saved_in.at(i), saved_out.at(i));
        },
        name);
}

} // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) + y.at(i);
    return a.tape->emit(
        std::move(out), {a, b},
        [a, b](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            axpy_into(t.grad_buffer(a.id), g);
            axpy_into(t.grad_buffer(b.id), g);
        },
        "add");
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) - y.at(i);
    return a.tape->emit(
        std::move(out), {a, b},
        [a, b](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            axpy_into(t.grad_buffer(a.id), g);
            axpy_into(t.grad_buffer(b.id), g, -1.0);
        },
        "sub");
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * y.at(i);
    Tensor xs = x, ys = y;
    return a.tape->emit(
        std::move(out), {a, b},
        [a, b, xs, ys](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& ga = t.grad_buffer(a.id);
            Tensor& gb = t.grad_buffer(b.id);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                ga.at(i) += g.at(i) * ys.at(i);
                gb.at(i) += g.at(i) * xs.at(i);
            }
        },
        "mul");
}

Var divide(Var a, Var b) {
    require_same_shape(a, b, "divide");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) / y.at(i);
    Tensor ys = y, os = out;
    return a.tape->emit(
        std::move(out), {a, b},
        [a, b, ys, os](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& ga = t.grad_buffer(a.id);
            Tensor& gb = t.grad_buffer(b.id);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                const double inv = 1.0 / ys.at(i);
                ga.at(i) += g.at(i) * inv;
                gb.at(i) -= g.at(i) * os.at(i) * inv;
            }
        },
        "divide");
}

Var add_scalar(Var a, double c) {
    const Tensor& x = val(a);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) + c;
    return a.tape->emit(
        std::move(out), {a},
        [a](Tape& t, int id) { axpy_into(t.grad_buffer(a.id), t.grad_buffer(id)); }, "add_scalar");
}

Var mul_scalar(Var a, double c) {
    const Tensor& x = val(a);
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * c;
    return a.tape->emit(
        std::move(out), {a},
        [a, c](Tape& t, int id) { axpy_into(t.grad_buffer(a.id), t.grad_buffer(id), c); },
        "mul_scalar");
}

Var abs_value(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Var relu(Var a) {
    return unary_elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var sigmoid(Var a) {
    return unary_elementwise(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var exp_elem(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Var matmul(Var a, Var b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    const int m = x.rows(), k = x.cols(), n = y.cols();
    if (y.rows() != k)
        throw validation_error("matmul: inner dimensions disagree, " + shape_string(x.shape()) +
                               " vs " + shape_string(y.shape()));
    Tensor out({m, n});
    matmul_raw(x.data(), y.data(), out.data(), m, k, n);
    Tensor xs = x, ys = y;
    return a.tape->emit(
        std::move(out), {a, b},
        [a, b, xs, ys, m, k, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            // dA = dC·Bᵀ, dB = Aᵀ·dC
            matmul_a_bt_accum(g.data(), ys.data(), t.grad_buffer(a.id).data(), m, n, k);
            matmul_at_b_accum(xs.data(), g.data(), t.grad_buffer(b.id).data(), m, k, n);
        },
        "matmul");
}

Var transpose(Var a) {
    require_2d(a, "transpose");
    const Tensor& x = val(a);
    const int m = x.rows(), n = x.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(j, i) = x(i, j);
    return a.tape->emit(
        std::move(out), {a},
        [a, m, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& ga = t.grad_buffer(a.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga(i, j) += g(j, i);
        },
        "transpose");
}

Var add_rowvec(Var x, Var bias) {
    require_2d(x, "add_rowvec");
    const Tensor& xv = val(x);
    const Tensor& bv = val(bias);
    const int m = xv.rows(), n = xv.cols();
    if (bv.size() != n)
        throw validation_error("add_rowvec: bias size " + std::to_string(bv.size()) +
                               " does not match column count " + std::to_string(n));
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = xv(i, j) + bv.at(j);
    return x.tape->emit(
        std::move(out), {x, bias},
        [x, bias, m, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            axpy_into(t.grad_buffer(x.id), g);
            Tensor& gb = t.grad_buffer(bias.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb.at(j) += g(i, j);
        },
        "add_rowvec");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    require_2d(x, "layer_norm");
    const Tensor& xv = val(x);
    const int m = xv.rows(), d = xv.cols();
    if (d < 2) throw validation_error("layer_norm: last-axis extent must be >= 2");
    if (eps <= 0.0) throw validation_error("layer_norm: eps must be positive");
    const Tensor& gv = val(gamma);
    const Tensor& bv = val(beta);
    if (gv.size() != d || bv.size() != d)
        throw validation_error("layer_norm: gamma/beta must have size d");

    Tensor xhat({m, d});
    Tensor inv_std({m, 1});
    Tensor out({m, d});
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xv(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std(i, 0) = istd;
        for (int j = 0; j < d; ++j) {
            const double h = (xv(i, j) - mean) * istd;
            xhat(i, j) = h;
            out(i, j) = h * gv.at(j) + bv.at(j);
        }
    }
    Tensor gs = gv;
    return x.tape->emit(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat, inv_std, gs, m, d](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            Tensor& gg = t.grad_buffer(gamma.id);
            Tensor& gb = t.grad_buffer(beta.id);
            for (int i = 0; i < m; ++i) {
                // dxhat = g * gamma; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dh = g(i, j) * gs.at(j);
                    mean_dh += dh;
                    mean_dh_h += dh * xhat(i, j);
                }
                mean_dh /= d;
                mean_dh_h /= d;
                const double istd = inv_std(i, 0);
                for (int j = 0; j < d; ++j) {
                    const double dh = g(i, j) * gs.at(j);
                    gx(i, j) += (dh - mean_dh - xhat(i, j) * mean_dh_h) * istd;
                    gg.at(j) += g(i, j) * xhat(i, j);
                    gb.at(j) += g(i, j);
                }
            }
        },
        "layer_norm");
}

Var softmax_rows(Var x) {
    require_2d(x, "softmax_rows");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        double mx = xv(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, xv(i, j));
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(xv(i, j) - mx);
            out(i, j) = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < n; ++j) out(i, j) *= inv;
    }
    Tensor ys = out;
    return x.tape->emit(
        std::move(out), {x},
        [x, ys, m, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (int i = 0; i < m; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g(i, j) * ys(i, j);
                for (int j = 0; j < n; ++j) gx(i, j) += ys(i, j) * (g(i, j) - dot);
            }
        },
        "softmax_rows");
}

Var sum_all(Var a) {
    const Tensor& x = val(a);
    double s = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) s += x.at(i);
    return a.tape->emit(
        Tensor::scalar(s), {a},
        [a](Tape& t, int id) {
            const double g = t.grad_buffer(id).at(0);
            Tensor& ga = t.grad_buffer(a.id);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
        },
        "sum_all");
}

Var mean_all(Var a) {
    const double n = static_cast<double>(val(a).size());
    return mul_scalar(sum_all(a), 1.0 / n);
}

Var mean_rows(Var x) {
    require_2d(x, "mean_rows");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    Tensor out({1, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(0, j) += xv(i, j);
    for (int j = 0; j < n; ++j) out(0, j) /= m;
    return x.tape->emit(
        std::move(out), {x},
        [x, m, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            const double inv = 1.0 / m;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gx(i, j) += g(0, j) * inv;
        },
        "mean_rows");
}

Var reshape(Var x, std::vector<int> shape) {
    const Tensor& xv = val(x);
    Tensor out(std::move(shape), std::vector<double>(xv.data(), xv.data() + xv.size()));
    return x.tape->emit(
        std::move(out), {x},
        [x](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (std::int64_t i = 0; i < g.size(); ++i) gx.at(i) += g.at(i);
        },
        "reshape");
}

Var repeat_rows(Var x, int k) {
    require_2d(x, "repeat_rows");
    if (k < 1) throw validation_error("repeat_rows: k must be >= 1");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    Tensor out({m * k, n});
    for (int i = 0; i < m; ++i)
        for (int r = 0; r < k; ++r)
            for (int j = 0; j < n; ++j) out(i * k + r, j) = xv(i, j);
    return x.tape->emit(
        std::move(out), {x},
        [x, m, n, k](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (int i = 0; i < m; ++i)
                for (int r = 0; r < k; ++r)
                    for (int j = 0; j < n; ++j) gx(i, j) += g(i * k + r, j);
        },
        "repeat_rows");
}

Var gather_rows(Var x, std::vector<int> idx) {
    require_2d(x, "gather_rows");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    Tensor out({static_cast<int>(idx.size()), n});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const int i = idx[r];
        if (i < 0 || i >= m) throw validation_error("gather_rows: index out of range");
        for (int j = 0; j < n; ++j) out(static_cast<int>(r), j) = xv(i, j);
    }
    return x.tape->emit(
        std::move(out), {x},
        [x, idx = std::move(idx), n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < n; ++j) gx(idx[r], j) += g(static_cast<int>(r), j);
        },
        "gather_rows");
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw validation_error("concat_rows: empty input list");
    const int n = val(xs[0]).cols();
    int rows = 0;
    for (Var v : xs) {
        require_2d(v, "concat_rows");
        if (val(v).cols() != n) throw validation_error("concat_rows: column counts differ");
        rows += val(v).rows();
    }
    Tensor out({rows, n});
    int r0 = 0;
    for (Var v : xs) {
        const Tensor& t = val(v);
        for (int i = 0; i < t.rows(); ++i)
            for (int j = 0; j < n; ++j) out(r0 + i, j) = t(i, j);
        r0 += t.rows();
    }
    std::vector<int> row_counts;
    for (Var v : xs) row_counts.push_back(val(v).rows());
    return xs[0].tape->emit(
        std::move(out), xs,
        [xs, row_counts, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            int r0 = 0;
            for (std::size_t p = 0; p < xs.size(); ++p) {
                Tensor& gx = t.grad_buffer(xs[p].id);
                for (int i = 0; i < row_counts[p]; ++i)
                    for (int j = 0; j < n; ++j) gx(i, j) += g(r0 + i, j);
                r0 += row_counts[p];
            }
        },
        "concat_rows");
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw validation_error("concat_cols: empty input list");
    const int m = val(xs[0]).rows();
    int cols = 0;
    for (Var v : xs) {
        require_2d(v, "concat_cols");
        if (val(v).rows() != m) throw validation_error("concat_cols: row counts differ");
        cols += val(v).cols();
    }
    Tensor out({m, cols});
    int c0 = 0;
    for (Var v : xs) {
        const Tensor& t = val(v);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < t.cols(); ++j) out(i, c0 + j) = t(i, j);
        c0 += t.cols();
    }
    std::vector<int> col_counts;
    for (Var v : xs) col_counts.push_back(val(v).cols());
    return xs[0].tape->emit(
        std::move(out), xs,
        [xs, col_counts, m](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            int c0 = 0;
            for (std::size_t p = 0; p < xs.size(); ++p) {
                Tensor& gx = t.grad_buffer(xs[p].id);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < col_counts[p]; ++j) gx(i, j) += g(i, c0 + j);
                c0 += col_counts[p];
            }
        },
        "concat_cols");
}

Var slice_cols(Var x, int c0, int c1) {
    require_2d(x, "slice_cols");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) throw validation_error("slice_cols: bad column range");
    Tensor out({m, c1 - c0});
    for (int i = 0; i < m; ++i)
        for (int j = c0; j < c1; ++j) out(i, j - c0) = xv(i, j);
    return x.tape->emit(
        std::move(out), {x},
        [x, c0, c1, m](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (int i = 0; i < m; ++i)
                for (int j = c0; j < c1; ++j) gx(i, j) += g(i, j - c0);
        },
        "slice_cols");
}

Var rows_normalize(Var x, double zero_eps, bool strict) {
    require_2d(x, "rows_normalize");
    const Tensor& xv = val(x);
    const int m = xv.rows(), n = xv.cols();
    Tensor out({m, n});
    Tensor inv_norm({m, 1});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += xv(i, j) * xv(i, j);
        const double norm = std::sqrt(s);
        if (norm < zero_eps) {
            if (strict) throw numeric_error("rows_normalize: zero-norm row " + std::to_string(i));
            inv_norm(i, 0) = 0.0; // degenerate rows stay zero, no gradient
            continue;
        }
        const double inv = 1.0 / norm;
        inv_norm(i, 0) = inv;
        for (int j = 0; j < n; ++j) out(i, j) = xv(i, j) * inv;
    }
    Tensor ys = out;
    return x.tape->emit(
        std::move(out), {x},
        [x, ys, inv_norm, m, n](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor& gx = t.grad_buffer(x.id);
            for (int i = 0; i < m; ++i) {
                const double inv = inv_norm(i, 0);
                if (inv == 0.0) continue;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g(i, j) * ys(i, j);
                for (int j = 0; j < n; ++j) gx(i, j) += inv * (g(i, j) - dot * ys(i, j));
            }
        },
        "rows_normalize");
}

namespace {

// Same-size separable blur with zero padding; linear and self-adjoint for a
// symmetric kernel, so backward reuses the forward.
void blur_apply(const double* src, double* dst, int height, int width, int channels,
                const std::vector<double>& kernel) {
    const int kr = static_cast<int>(kernel.size()) / 2;
    std::vector<double> tmp(static_cast<std::size_t>(height) * width * channels, 0.0);
    // horizontal
    for (int y = 0; y < height; ++y) {
        for (int xp = 0; xp < width; ++xp) {
            double* o = tmp.data() + (static_cast<std::size_t>(y) * width + xp) * channels;
            for (int ktap = -kr; ktap <= kr; ++ktap) {
                const int xs = xp + ktap;
                if (xs < 0 || xs >= width) continue;
                const double w = kernel[static_cast<std::size_t>(ktap + kr)];
                const double* s = src + (static_cast<std::size_t>(y) * width + xs) * channels;
                for (int c = 0; c < channels; ++c) o[c] += w * s[c];
            }
        }
    }
    // vertical
    for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] = 0.0;
    for (int y = 0; y < height; ++y) {
        for (int xp = 0; xp < width; ++xp) {
            double* o = dst + (static_cast<std::size_t>(y) * width + xp) * channels;
            for (int ktap = -kr; ktap <= kr; ++ktap) {
                const int ysrc = y + ktap;
                if (ysrc < 0 || ysrc >= height) continue;
                const double w = kernel[static_cast<std::size_t>(ktap + kr)];
                const double* s = tmp.data() + (static_cast<std::size_t>(ysrc) * width + xp) * channels;
                for (int c = 0; c < channels; ++c) o[c] += w * s[c];
            }
        }
    }
}

} // namespace

Var blur2d(Var img, int height, int width, const std::vector<double>& kernel) {
    require_2d(img, "blur2d");
    const Tensor& xv = val(img);
    const int channels = xv.cols();
    if (xv.rows() != height * width)
        throw validation_error("blur2d: tensor rows do not match height*width");
    if (kernel.size() % 2 == 0) throw validation_error("blur2d: kernel must have odd length");
    Tensor out({height * width, channels});
    blur_apply(xv.data(), out.data(), height, width, channels, kernel);
    return img.tape->emit(
        std::move(out), {img},
        [img, height, width, channels, kernel](Tape& t, int id) {
            const Tensor& g = t.grad_buffer(id);
            Tensor gb({height * width, channels});
            blur_apply(g.data(), gb.data(), height, width, channels, kernel);
            axpy_into(t.grad_buffer(img.id), gb);
        },
        "blur2d");
}

Var cross_entropy_rows(Var logits, const std::vector<int>& targets,
                       const std::vector<double>& row_weights, bool exclude_target) {
    require_2d(logits, "cross_entropy_rows");
    const Tensor& xv = val(logits);
    const int m = xv.rows(), n = xv.cols();
    if (static_cast<int>(targets.size()) != m || static_cast<int>(row_weights.size()) != m)
        throw validation_error("cross_entropy_rows: targets/weights must have one entry per row");
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        const int tgt = targets[i];
        if (tgt < 0 || tgt >= n) throw validation_error("cross_entropy_rows: target out of range");
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
            if (exclude_target && j == tgt) continue;
            mx = std::max(mx, xv(i, j));
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            if (exclude_target && j == tgt) continue;
            z += std::exp(xv(i, j) - mx);
        }
        loss += row_weights[i] * (mx + std::log(z) - xv(i, tgt));
    }
    Tensor xs = xv;
    return logits.tape->emit(
        Tensor::scalar(loss), {logits},
        [logits, xs, targets, row_weights, exclude_target, m, n](Tape& t, int id) {
            const double g = t.grad_buffer(id).at(0);
            Tensor& gx = t.grad_buffer(logits.id);
            for (int i = 0; i < m; ++i) {
                const int tgt = targets[i];
                double mx = -1e300;
                for (int j = 0; j < n; ++j) {
                    if (exclude_target && j == tgt) continue;
                    mx = std::max(mx, xs(i, j));
                }
                double z = 0.0;
                for (int j = 0; j < n; ++j) {
                    if (exclude_target && j == tgt) continue;
                    z += std::exp(xs(i, j) - mx);
                }
                const double w = g * row_weights[i];
                for (int j = 0; j < n; ++j) {
                    double p = 0.0;
                    if (!(exclude_target && j == tgt)) p = std::exp(xs(i, j) - mx) / z;
                    double d = p;
                    if (j == tgt) d -= 1.0;
                    gx(i, j) += w * d;
                }
            }
        },
        "cross_entropy_rows");
}

Var entropy_rows(Var probs) {
    require_2d(probs, "entropy_rows");
    const Tensor& p = val(probs);
    const int m = p.rows(), n = p.cols();
    double h = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = p(i, j);
            if (v > 0.0) h -= v * std::log(v);
        }
    h /= m;
    Tensor ps = p;
    return probs.tape->emit(
        Tensor::scalar(h), {probs},
        [probs, ps, m, n](Tape& t, int id) {
            const double g = t.grad_buffer(id).at(0) / m;
            Tensor& gp = t.grad_buffer(probs.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double v = ps(i, j);
                    if (v > 0.0) gp(i, j) -= g * (std::log(v) + 1.0);
                }
        },
        "entropy_rows");
}

Var affine(Var x, Var weight, Var bias) { return add_rowvec(matmul(x, weight), bias); }

} // namespace ops
} // namespace gala

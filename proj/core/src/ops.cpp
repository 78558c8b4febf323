#include "cellcontrast/nd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace cellcontrast::nd {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

[[noreturn]] void rank_error(const char* op, const Shape& a, std::size_t expected) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(expected) + ", got " + shape_string(a));
}

void require_same_tape(const char* op, const void* a, const void* b) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    }
}

void require_rank(const char* op, const Shape& s, std::size_t r) {
    if (s.size() != r) {
        rank_error(op, s, r);
    }
}

template<typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
    std::size_t batch, channels, height, width, out_channels, kernel, stride, padding, out_height, out_width;

    std::size_t patch() const { return channels * kernel * kernel; }
    std::size_t pixels() const { return out_height * out_width; }
};

// cols is (C*K*K) x (Ho*Wo), row-major.
template<typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
    const auto P = g.pixels();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) && ix < static_cast<std::ptrdiff_t>(g.width);
                        row[oy * g.out_width + ox] = inside ? image[(c * g.height + iy) * g.width + ix] : T(0);
                    }
                }
            }
        }
    }
}

template<typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
    const auto P = g.pixels();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        continue;
                    }
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) {
                            continue;
                        }
                        image[(c * g.height + iy) * g.width + ix] += row[oy * g.out_width + ox];
                    }
                }
            }
        }
    }
}

template<typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
    if (!dst) {
        return;
    }
    auto d = dst->data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

}

template<typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape("add", a.tape, b.tape);
    if (a.shape() != b.shape()) {
        shape_error("add", a.shape(), b.shape());
    }
    Tensor<T> out(a.shape());
    auto x = a.value().data(), y = b.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] + y[i];
    }
    return a.tape->record("add", std::move(out), {a.id, b.id},
        [](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            accumulate(gin[0], g);
            accumulate(gin[1], g);
        });
}

template<typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_tape("sub", a.tape, b.tape);
    if (a.shape() != b.shape()) {
        shape_error("sub", a.shape(), b.shape());
    }
    Tensor<T> out(a.shape());
    auto x = a.value().data(), y = b.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] - y[i];
    }
    return a.tape->record("sub", std::move(out), {a.id, b.id},
        [](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            accumulate(gin[0], g);
            if (gin[1]) {
                auto d = gin[1]->data();
                auto s = g.data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] -= s[i];
                }
            }
        });
}

template<typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape("mul", a.tape, b.tape);
    if (a.shape() != b.shape()) {
        shape_error("mul", a.shape(), b.shape());
    }
    Tensor<T> out(a.shape());
    auto x = a.value().data(), y = b.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] * y[i];
    }
    const auto ia = a.id, ib = b.id;
    return a.tape->record("mul", std::move(out), {ia, ib},
        [ia, ib](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto x = tape.value(ia).data(), y = tape.value(ib).data();
            auto s = g.data();
            if (gin[0]) {
                auto d = gin[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] += s[i] * y[i];
                }
            }
            if (gin[1]) {
                auto d = gin[1]->data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] += s[i] * x[i];
                }
            }
        });
}

template<typename T>
Var<T> scale(Var<T> a, T factor) {
    Tensor<T> out(a.shape());
    auto x = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] * factor;
    }
    return a.tape->record("scale", std::move(out), {a.id},
        [factor](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto d = gin[0]->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += s[i] * factor;
            }
        });
}

namespace {

// c (M x N) += a (M x K) * b (K x N); fixed accumulation order per output row.
template<typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        T* crow = c + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = a[i * K + k];
            const T* brow = b + k * N;
            for (std::size_t j = 0; j < N; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

// c (M x K) += g (M x N) * b^T, b is (K x N).
template<typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t M, std::size_t N, std::size_t K) {
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            T acc = 0;
            for (std::size_t j = 0; j < N; ++j) {
                acc += g[i * N + j] * b[k * N + j];
            }
            c[i * K + k] += acc;
        }
    }
}

// c (K x N) += a^T * g, a is (M x K), g is (M x N).
template<typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = a[i * K + k];
            T* crow = c + k * N;
            const T* grow = g + i * N;
            for (std::size_t j = 0; j < N; ++j) {
                crow[j] += aik * grow[j];
            }
        }
    }
}

}

template<typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape("matmul", a.tape, b.tape);
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        shape_error("matmul", sa, sb);
    }
    const auto M = sa[0], K = sa[1], N = sb[1];
    Tensor<T> out({M, N});
    gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), M, K, N);
    const auto ia = a.id, ib = b.id;
    return a.tape->record("matmul", std::move(out), {ia, ib},
        [ia, ib, M, K, N](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (gin[0]) {
                gemm_nt(g.data().data(), tape.value(ib).data().data(), gin[0]->data().data(), M, N, K);
            }
            if (gin[1]) {
                gemm_tn(tape.value(ia).data().data(), g.data().data(), gin[1]->data().data(), M, K, N);
            }
        });
}

template<typename T>
Var<T> transpose(Var<T> a) {
    require_rank("transpose", a.shape(), 2);
    const auto M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out({N, M});
    const auto& x = a.value();
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            out.at(j, i) = x.at(i, j);
        }
    }
    return a.tape->record("transpose", std::move(out), {a.id},
        [M, N](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto& d = *gin[0];
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t j = 0; j < N; ++j) {
                    d.at(i, j) += g.at(j, i);
                }
            }
        });
}

template<typename T>
Var<T> affine(Var<T> x, Var<T> weight, Var<T> bias) {
    require_same_tape("affine", x.tape, weight.tape);
    require_same_tape("affine", x.tape, bias.tape);
    const auto& sx = x.shape();
    const auto& sw = weight.shape();
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0]) {
        shape_error("affine", sx, sw);
    }
    if (bias.shape() != Shape{sw[1]}) {
        shape_error("affine", sw, bias.shape());
    }
    const auto M = sx[0], K = sx[1], N = sw[1];
    Tensor<T> out({M, N});
    auto o = out.data();
    auto bv = bias.value().data();
    for (std::size_t i = 0; i < M; ++i) {
        std::copy(bv.begin(), bv.end(), o.begin() + i * N);
    }
    gemm_nn(x.value().data().data(), weight.value().data().data(), o.data(), M, K, N);
    const auto ix = x.id, iw = weight.id;
    return x.tape->record("affine", std::move(out), {ix, iw, bias.id},
        [ix, iw, M, K, N](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (gin[0]) {
                gemm_nt(g.data().data(), tape.value(iw).data().data(), gin[0]->data().data(), M, N, K);
            }
            if (gin[1]) {
                gemm_tn(tape.value(ix).data().data(), g.data().data(), gin[1]->data().data(), M, K, N);
            }
            if (gin[2]) {
                auto d = gin[2]->data();
                for (std::size_t i = 0; i < M; ++i) {
                    for (std::size_t j = 0; j < N; ++j) {
                        d[j] += g.at(i, j);
                    }
                }
            }
        });
}

template<typename T>
Var<T> sub_per_row(Var<T> a, Var<T> c) {
    require_same_tape("sub_per_row", a.tape, c.tape);
    require_rank("sub_per_row", a.shape(), 2);
    const auto M = a.shape()[0], N = a.shape()[1];
    if (c.shape() != Shape{M}) {
        shape_error("sub_per_row", a.shape(), c.shape());
    }
    Tensor<T> out(a.shape());
    const auto& x = a.value();
    const auto& cv = c.value();
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            out.at(i, j) = x.at(i, j) - cv[i];
        }
    }
    return a.tape->record("sub_per_row", std::move(out), {a.id, c.id},
        [M, N](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            accumulate(gin[0], g);
            if (gin[1]) {
                auto& d = *gin[1];
                for (std::size_t i = 0; i < M; ++i) {
                    for (std::size_t j = 0; j < N; ++j) {
                        d[i] -= g.at(i, j);
                    }
                }
            }
        });
}

template<typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Conv2dOptions opts) {
    require_same_tape("conv2d", x.tape, weight.tape);
    const auto& sx = x.shape();
    const auto& sw = weight.shape();
    if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1] || sw[2] != sw[3]) {
        shape_error("conv2d", sx, sw);
    }
    if (opts.stride == 0) {
        throw std::invalid_argument("conv2d: stride must be positive");
    }
    ConvGeometry geo{};
    geo.batch = sx[0];
    geo.channels = sx[1];
    geo.height = sx[2];
    geo.width = sx[3];
    geo.out_channels = sw[0];
    geo.kernel = sw[2];
    geo.stride = opts.stride;
    geo.padding = opts.padding;
    if (geo.height + 2 * geo.padding < geo.kernel || geo.width + 2 * geo.padding < geo.kernel) {
        shape_error("conv2d", sx, sw);
    }
    geo.out_height = (geo.height + 2 * geo.padding - geo.kernel) / geo.stride + 1;
    geo.out_width = (geo.width + 2 * geo.padding - geo.kernel) / geo.stride + 1;

    const auto P = geo.pixels();
    const auto Q = geo.patch();
    Tensor<T> out({geo.batch, geo.out_channels, geo.out_height, geo.out_width});
    std::vector<T> cols(Q * P);
    Eigen::Map<const RowMajor<T>> W(weight.value().data().data(), geo.out_channels, Q);
    const auto in_stride = geo.channels * geo.height * geo.width;
    const auto out_stride = geo.out_channels * P;
    for (std::size_t b = 0; b < geo.batch; ++b) {
        im2col(x.value().data().data() + b * in_stride, geo, cols.data());
        Eigen::Map<const RowMajor<T>> C(cols.data(), Q, P);
        Eigen::Map<RowMajor<T>> O(out.data().data() + b * out_stride, geo.out_channels, P);
        O.noalias() = W * C;
    }

    const auto ix = x.id, iw = weight.id;
    return x.tape->record("conv2d", std::move(out), {ix, iw},
        [ix, iw, geo](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto P = geo.pixels();
            const auto Q = geo.patch();
            const auto in_stride = geo.channels * geo.height * geo.width;
            const auto out_stride = geo.out_channels * P;
            std::vector<T> cols(Q * P);
            Eigen::Map<const RowMajor<T>> W(tape.value(iw).data().data(), geo.out_channels, Q);
            RowMajor<T> dcols(Q, P);
            for (std::size_t b = 0; b < geo.batch; ++b) {
                Eigen::Map<const RowMajor<T>> G(g.data().data() + b * out_stride, geo.out_channels, P);
                if (gin[1]) {
                    im2col(tape.value(ix).data().data() + b * in_stride, geo, cols.data());
                    Eigen::Map<const RowMajor<T>> C(cols.data(), Q, P);
                    Eigen::Map<RowMajor<T>> dW(gin[1]->data().data(), geo.out_channels, Q);
                    dW.noalias() += G * C.transpose();
                }
                if (gin[0]) {
                    dcols.noalias() = W.transpose() * G;
                    col2im_add(dcols.data(), geo, gin[0]->data().data() + b * in_stride);
                }
            }
        });
}

template<typename T>
Var<T> global_avg_pool(Var<T> x) {
    require_rank("global_avg_pool", x.shape(), 4);
    const auto B = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    if (HW == 0) {
        throw std::invalid_argument("global_avg_pool: empty spatial extent");
    }
    Tensor<T> out({B, C});
    auto xv = x.value().data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        T acc = 0;
        for (std::size_t p = 0; p < HW; ++p) {
            acc += xv[bc * HW + p];
        }
        out[bc] = acc / static_cast<T>(HW);
    }
    return x.tape->record("global_avg_pool", std::move(out), {x.id},
        [B, C, HW](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto d = gin[0]->data();
            for (std::size_t bc = 0; bc < B * C; ++bc) {
                const T v = g[bc] / static_cast<T>(HW);
                for (std::size_t p = 0; p < HW; ++p) {
                    d[bc * HW + p] += v;
                }
            }
        });
}

template<typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, std::size_t groups, T eps) {
    require_same_tape("group_norm", x.tape, gamma.tape);
    require_same_tape("group_norm", x.tape, beta.tape);
    require_rank("group_norm", x.shape(), 4);
    const auto B = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
        shape_error("group_norm", x.shape(), gamma.shape());
    }
    if (groups == 0 || C % groups != 0) {
        throw std::invalid_argument("group_norm: " + std::to_string(C) + " channels do not split into " + std::to_string(groups) + " groups");
    }
    const auto cpg = C / groups;
    const auto m = cpg * HW;

    auto xhat = std::make_shared<std::vector<T>>(x.value().size());
    auto inv_std = std::make_shared<std::vector<T>>(B * groups);
    Tensor<T> out(x.shape());
    auto xv = x.value().data();
    auto gv = gamma.value().data();
    auto bv = beta.value().data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t grp = 0; grp < groups; ++grp) {
            const auto start = (b * C + grp * cpg) * HW;
            T mu = 0;
            for (std::size_t k = 0; k < m; ++k) {
                mu += xv[start + k];
            }
            mu /= static_cast<T>(m);
            T var = 0;
            for (std::size_t k = 0; k < m; ++k) {
                const T d = xv[start + k] - mu;
                var += d * d;
            }
            var /= static_cast<T>(m);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[b * groups + grp] = is;
            for (std::size_t k = 0; k < m; ++k) {
                const auto c = grp * cpg + k / HW;
                const T xh = (xv[start + k] - mu) * is;
                (*xhat)[start + k] = xh;
                out[start + k] = gv[c] * xh + bv[c];
            }
        }
    }

    const auto ig = gamma.id;
    return x.tape->record("group_norm", std::move(out), {x.id, gamma.id, beta.id},
        [xhat, inv_std, ig, B, C, HW, groups, cpg, m](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto gv = tape.value(ig).data();
            auto gd = g.data();
            const auto& xh = *xhat;
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t grp = 0; grp < groups; ++grp) {
                    const auto start = (b * C + grp * cpg) * HW;
                    T sum_d = 0, sum_dx = 0;
                    for (std::size_t k = 0; k < m; ++k) {
                        const auto c = grp * cpg + k / HW;
                        const T dxh = gd[start + k] * gv[c];
                        sum_d += dxh;
                        sum_dx += dxh * xh[start + k];
                        if (gin[1]) {
                            (*gin[1])[c] += gd[start + k] * xh[start + k];
                        }
                        if (gin[2]) {
                            (*gin[2])[c] += gd[start + k];
                        }
                    }
                    if (gin[0]) {
                        const T is = (*inv_std)[b * groups + grp];
                        const T inv_m = T(1) / static_cast<T>(m);
                        auto d = gin[0]->data();
                        for (std::size_t k = 0; k < m; ++k) {
                            const auto c = grp * cpg + k / HW;
                            const T dxh = gd[start + k] * gv[c];
                            d[start + k] += is * (dxh - inv_m * sum_d - xh[start + k] * inv_m * sum_dx);
                        }
                    }
                }
            }
        });
}

template<typename T>
Var<T> relu(Var<T> a) {
    Tensor<T> out(a.shape());
    auto x = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] > T(0) ? x[i] : T(0);
    }
    const auto ia = a.id;
    return a.tape->record("relu", std::move(out), {ia},
        [ia](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto x = tape.value(ia).data();
            auto d = gin[0]->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (x[i] > T(0)) {
                    d[i] += s[i];
                }
            }
        });
}

template<typename T>
Var<T> exp(Var<T> a) {
    Tensor<T> out(a.shape());
    auto x = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = std::exp(x[i]);
    }
    return a.tape->record("exp", std::move(out), {a.id},
        [](const Tape<T>& tape, std::size_t self, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto y = tape.value(self).data();
            auto d = gin[0]->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += s[i] * y[i];
            }
        });
}

template<typename T>
Var<T> log(Var<T> a) {
    Tensor<T> out(a.shape());
    auto x = a.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(x[i] > T(0))) {
            throw std::domain_error("log: non-positive input " + std::to_string(static_cast<double>(x[i])));
        }
        o[i] = std::log(x[i]);
    }
    const auto ia = a.id;
    return a.tape->record("log", std::move(out), {ia},
        [ia](const Tape<T>& tape, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto x = tape.value(ia).data();
            auto d = gin[0]->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += s[i] / x[i];
            }
        });
}

template<typename T>
Var<T> l2_normalize_rows(Var<T> a) {
    require_rank("l2_normalize_rows", a.shape(), 2);
    const auto M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out(a.shape());
    auto norms = std::make_shared<std::vector<T>>(M);
    const auto& x = a.value();
    for (std::size_t i = 0; i < M; ++i) {
        T ss = 0;
        for (std::size_t j = 0; j < N; ++j) {
            ss += x.at(i, j) * x.at(i, j);
        }
        const T n = std::sqrt(ss);
        if (!(n > T(0))) {
            throw std::domain_error("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
        }
        (*norms)[i] = n;
        for (std::size_t j = 0; j < N; ++j) {
            out.at(i, j) = x.at(i, j) / n;
        }
    }
    return a.tape->record("l2_normalize_rows", std::move(out), {a.id},
        [norms, M, N](const Tape<T>& tape, std::size_t self, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& y = tape.value(self);
            auto& d = *gin[0];
            for (std::size_t i = 0; i < M; ++i) {
                T dot = 0;
                for (std::size_t j = 0; j < N; ++j) {
                    dot += y.at(i, j) * g.at(i, j);
                }
                const T inv = T(1) / (*norms)[i];
                for (std::size_t j = 0; j < N; ++j) {
                    d.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) * inv;
                }
            }
        });
}

template<typename T>
Var<T> sum(Var<T> a) {
    T acc = 0;
    for (auto v : a.value().data()) {
        acc += v;
    }
    return a.tape->record("sum", Tensor<T>::scalar(acc), {a.id},
        [](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const T s = g[0];
            for (auto& v : gin[0]->data()) {
                v += s;
            }
        });
}

template<typename T>
Var<T> mean(Var<T> a) {
    const auto n = a.value().size();
    if (n == 0) {
        throw std::invalid_argument("mean: empty tensor");
    }
    T acc = 0;
    for (auto v : a.value().data()) {
        acc += v;
    }
    return a.tape->record("mean", Tensor<T>::scalar(acc / static_cast<T>(n)), {a.id},
        [n](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const T s = g[0] / static_cast<T>(n);
            for (auto& v : gin[0]->data()) {
                v += s;
            }
        });
}

template<typename T>
Var<T> sum_rows(Var<T> a) {
    require_rank("sum_rows", a.shape(), 2);
    const auto M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out({M});
    const auto& x = a.value();
    for (std::size_t i = 0; i < M; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < N; ++j) {
            acc += x.at(i, j);
        }
        out[i] = acc;
    }
    return a.tape->record("sum_rows", std::move(out), {a.id},
        [M, N](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto& d = *gin[0];
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t j = 0; j < N; ++j) {
                    d.at(i, j) += g[i];
                }
            }
        });
}

template<typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat: no inputs");
    }
    const auto& first = parts.front().shape();
    if (first.empty()) {
        rank_error("concat", first, 1);
    }
    Shape out_shape = first;
    out_shape[0] = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
        require_same_tape("concat", parts.front().tape, p.tape);
        const auto& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
            shape_error("concat", first, s);
        }
        out_shape[0] += s[0];
        ids.push_back(p.id);
        sizes.push_back(p.value().size());
    }
    std::vector<T> data;
    data.reserve(shape_size(out_shape));
    for (const auto& p : parts) {
        auto v = p.value().data();
        data.insert(data.end(), v.begin(), v.end());
    }
    return parts.front().tape->record("concat", Tensor<T>(out_shape, std::move(data)), ids,
        [sizes](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < sizes.size(); ++k) {
                if (gin[k]) {
                    auto d = gin[k]->data();
                    for (std::size_t i = 0; i < sizes[k]; ++i) {
                        d[i] += g[offset + i];
                    }
                }
                offset += sizes[k];
            }
        });
}

template<typename T>
Var<T> gather(Var<T> a, std::vector<std::size_t> indices) {
    const auto n = a.value().size();
    Tensor<T> out({indices.size()});
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= n) {
            throw std::out_of_range("gather: index " + std::to_string(indices[k]) + " outside tensor of shape " + shape_string(a.shape()));
        }
        out[k] = a.value()[indices[k]];
    }
    return a.tape->record("gather", std::move(out), {a.id},
        [indices = std::move(indices)](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto& d = *gin[0];
            for (std::size_t k = 0; k < indices.size(); ++k) {
                d[indices[k]] += g[k];
            }
        });
}

template<typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    auto out = a.value().reshaped(std::move(shape));
    return a.tape->record("reshape", std::move(out), {a.id},
        [](const Tape<T>&, std::size_t, const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            auto d = gin[0]->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += s[i];
            }
        });
}

template<typename T>
Tensor<T> masked_row_max(const Tensor<T>& a, const Tensor<T>& mask) {
    if (a.rank() != 2 || a.shape() != mask.shape()) {
        shape_error("masked_row_max", a.shape(), mask.shape());
    }
    const auto M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out({M});
    for (std::size_t i = 0; i < M; ++i) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < N; ++j) {
            if (mask.at(i, j) != T(0)) {
                best = std::max(best, a.at(i, j));
            }
        }
        out[i] = std::isfinite(best) ? best : T(0);
    }
    return out;
}

#define CELLCONTRAST_INSTANTIATE_OPS(T)                                             \
    template Var<T> add(Var<T>, Var<T>);                                            \
    template Var<T> sub(Var<T>, Var<T>);                                            \
    template Var<T> mul(Var<T>, Var<T>);                                            \
    template Var<T> scale(Var<T>, T);                                               \
    template Var<T> matmul(Var<T>, Var<T>);                                         \
    template Var<T> transpose(Var<T>);                                              \
    template Var<T> affine(Var<T>, Var<T>, Var<T>);                                 \
    template Var<T> sub_per_row(Var<T>, Var<T>);                                    \
    template Var<T> conv2d(Var<T>, Var<T>, Conv2dOptions);                          \
    template Var<T> global_avg_pool(Var<T>);                                        \
    template Var<T> group_norm(Var<T>, Var<T>, Var<T>, std::size_t, T);             \
    template Var<T> relu(Var<T>);                                                   \
    template Var<T> exp(Var<T>);                                                    \
    template Var<T> log(Var<T>);                                                    \
    template Var<T> l2_normalize_rows(Var<T>);                                      \
    template Var<T> sum(Var<T>);                                                    \
    template Var<T> mean(Var<T>);                                                   \
    template Var<T> sum_rows(Var<T>);                                               \
    template Var<T> concat(const std::vector<Var<T>>&);                             \
    template Var<T> gather(Var<T>, std::vector<std::size_t>);                       \
    template Var<T> reshape(Var<T>, Shape);                                         \
    template Tensor<T> masked_row_max(const Tensor<T>&, const Tensor<T>&);

CELLCONTRAST_INSTANTIATE_OPS(float)
CELLCONTRAST_INSTANTIATE_OPS(double)

}

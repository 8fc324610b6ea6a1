#include <cblas.h>

#include <cstring>
#include <vector>

#include "vtok/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vtok {

void ConvGeometry::validate(const Shape& in) const {
    if (in.size() != 4) throw ShapeError("conv3d expects [T,C,H,W], got " + shape_str(in));
    if (in[1] != in_channels)
        throw ShapeError("conv3d channel mismatch: layer expects " + std::to_string(in_channels) +
                         ", input has " + std::to_string(in[1]));
    if (in[0] < 1) throw ShapeError("conv3d needs at least one frame");
    if (kt < 1 || kh < 1 || kw < 1 || st < 1 || sh < 1 || sw < 1)
        throw ConfigError("conv3d kernel and stride must be positive");
    if (out_frames(in[0]) < 1 || out_height(in[2]) < 1 || out_width(in[3]) < 1)
        throw ShapeError("conv3d output would be empty for input " + shape_str(in));
}

namespace {

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

bool is_pointwise(const ConvGeometry& g) {
    return g.kt == 1 && g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1;
}

// Unfolds the receptive fields of one output frame into a [K, Ho*Wo] matrix.
template <typename Real>
void im2col(const ConvGeometry& g, const Tensor<Real>& x, int t_full, int ho_n, int wo_n,
            Real* col) {
    const int h_in = x.height(), w_in = x.width();
    const int ph = g.pad_h(), pw = g.pad_w();
    const std::size_t hw = static_cast<std::size_t>(ho_n) * wo_n;
    for (int ci = 0; ci < g.in_channels; ++ci) {
        for (int dt = 0; dt < g.kt; ++dt) {
            const Real* src = x.plane_ptr(g.source_frame(t_full, dt), ci);
            for (int dh = 0; dh < g.kh; ++dh) {
                for (int dw = 0; dw < g.kw; ++dw) {
                    const std::size_t row = ((static_cast<std::size_t>(ci) * g.kt + dt) * g.kh + dh) * g.kw + dw;
                    Real* dst = col + row * hw;
                    for (int ho = 0; ho < ho_n; ++ho) {
                        Real* drow = dst + static_cast<std::size_t>(ho) * wo_n;
                        const int hi = ho * g.sh + dh - ph;
                        if (hi < 0 || hi >= h_in) {
                            std::fill(drow, drow + wo_n, Real(0));
                            continue;
                        }
                        const Real* srow = src + static_cast<std::size_t>(hi) * w_in;
                        if (g.sw == 1) {
                            const int lo = std::min(wo_n, std::max(0, pw - dw));
                            const int hi_w = std::min(wo_n, w_in + pw - dw);
                            std::fill(drow, drow + lo, Real(0));
                            if (hi_w > lo) std::memcpy(drow + lo, srow + lo + dw - pw, sizeof(Real) * (hi_w - lo));
                            std::fill(drow + std::max(lo, hi_w), drow + wo_n, Real(0));
                        } else {
                            for (int wo = 0; wo < wo_n; ++wo) {
                                const int wi = wo * g.sw + dw - pw;
                                drow[wo] = (wi >= 0 && wi < w_in) ? srow[wi] : Real(0);
                            }
                        }
                    }
                }
            }
        }
    }
}

// Scatter-adds a [K, Ho*Wo] matrix back onto the input gradient.
template <typename Real>
void col2im(const ConvGeometry& g, const Real* col, int t_full, int ho_n, int wo_n,
            Tensor<Real>& dx) {
    const int h_in = dx.height(), w_in = dx.width();
    const int ph = g.pad_h(), pw = g.pad_w();
    const std::size_t hw = static_cast<std::size_t>(ho_n) * wo_n;
    for (int ci = 0; ci < g.in_channels; ++ci) {
        for (int dt = 0; dt < g.kt; ++dt) {
            Real* dst = dx.plane_ptr(g.source_frame(t_full, dt), ci);
            for (int dh = 0; dh < g.kh; ++dh) {
                for (int dw = 0; dw < g.kw; ++dw) {
                    const std::size_t row = ((static_cast<std::size_t>(ci) * g.kt + dt) * g.kh + dh) * g.kw + dw;
                    const Real* src = col + row * hw;
                    for (int ho = 0; ho < ho_n; ++ho) {
                        const int hi = ho * g.sh + dh - ph;
                        if (hi < 0 || hi >= h_in) continue;
                        const Real* srow = src + static_cast<std::size_t>(ho) * wo_n;
                        Real* drow = dst + static_cast<std::size_t>(hi) * w_in;
                        for (int wo = 0; wo < wo_n; ++wo) {
                            const int wi = wo * g.sw + dw - pw;
                            if (wi >= 0 && wi < w_in) drow[wi] += srow[wo];
                        }
                    }
                }
            }
        }
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

}  // namespace

namespace kernels {

template <typename Real>
void conv3d_forward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                    const Real* bias, Tensor<Real>& y) {
    g.validate(x.shape());
    y = Tensor<Real>(g.output_shape(x.shape()));
    const int t_out = y.frames();
    const int ho_n = y.height(), wo_n = y.width();
    const int hw = ho_n * wo_n;
    const int k = g.patch_size();
    const bool pointwise = is_pointwise(g);

#pragma omp parallel
    {
        std::vector<Real> col(pointwise ? 0 : static_cast<std::size_t>(k) * hw);
#pragma omp for schedule(static)
        for (int t = 0; t < t_out; ++t) {
            const int t_full = t + g.skip_leading;
            const Real* cols = nullptr;
            if (pointwise) {
                cols = x.frame_ptr(g.source_frame(t_full, 0));
            } else {
                im2col(g, x, t_full, ho_n, wo_n, col.data());
                cols = col.data();
            }
            Real* out = y.frame_ptr(t);
            gemm(CblasNoTrans, CblasNoTrans, g.out_channels, hw, k, Real(1), weight, k, cols, hw,
                 Real(0), out, hw);
            if (bias) {
                for (int co = 0; co < g.out_channels; ++co) {
                    Real* p = out + static_cast<std::size_t>(co) * hw;
                    const Real b = bias[co];
                    for (int i = 0; i < hw; ++i) p[i] += b;
                }
            }
        }
    }
}

template <typename Real>
void conv3d_backward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                     const Tensor<Real>& dy, Tensor<Real>* dx, Real* dweight, Real* dbias) {
    g.validate(x.shape());
    const Shape expect = g.output_shape(x.shape());
    if (dy.shape() != expect)
        throw ShapeError("conv3d backward: dy " + shape_str(dy.shape()) + ", expected " +
                         shape_str(expect));
    if (dx && !dx->same_shape(x)) *dx = Tensor<Real>(x.shape());
    const int t_out = dy.frames();
    const int ho_n = dy.height(), wo_n = dy.width();
    const int hw = ho_n * wo_n;
    const int k = g.patch_size();
    const bool pointwise = is_pointwise(g);
    const int nthreads = max_threads();

    if (dbias) {
        for (int t = 0; t < t_out; ++t) {
            for (int co = 0; co < g.out_channels; ++co) {
                const Real* p = dy.plane_ptr(t, co);
                Real s = 0;
                for (int i = 0; i < hw; ++i) s += p[i];
                dbias[co] += s;
            }
        }
    }
    if (!dx && !dweight) return;

    // Per-thread accumulators; thread 0 writes straight into the outputs.
    std::vector<std::vector<Real>> dw_local(static_cast<std::size_t>(nthreads));
    std::vector<Tensor<Real>> dx_local(static_cast<std::size_t>(nthreads));

#pragma omp parallel
    {
        const int tid = thread_id();
        Real* dw_acc = dweight;
        Tensor<Real>* dx_acc = dx;
        if (tid != 0) {
            if (dweight) {
                dw_local[tid].assign(g.weight_numel(), Real(0));
                dw_acc = dw_local[tid].data();
            }
            if (dx) {
                dx_local[tid] = Tensor<Real>(x.shape());
                dx_acc = &dx_local[tid];
            }
        }
        std::vector<Real> col(static_cast<std::size_t>(k) * hw);
        std::vector<Real> dcol(dx ? static_cast<std::size_t>(k) * hw : 0);
#pragma omp for schedule(static)
        for (int t = 0; t < t_out; ++t) {
            const int t_full = t + g.skip_leading;
            const Real* dyt = dy.frame_ptr(t);
            if (dw_acc) {
                const Real* cols = nullptr;
                if (pointwise) {
                    cols = x.frame_ptr(g.source_frame(t_full, 0));
                } else {
                    im2col(g, x, t_full, ho_n, wo_n, col.data());
                    cols = col.data();
                }
                gemm(CblasNoTrans, CblasTrans, g.out_channels, k, hw, Real(1), dyt, hw, cols, hw,
                     Real(1), dw_acc, k);
            }
            if (dx_acc) {
                if (pointwise) {
                    gemm(CblasTrans, CblasNoTrans, k, hw, g.out_channels, Real(1), weight, k, dyt,
                         hw, Real(1), dx_acc->frame_ptr(g.source_frame(t_full, 0)), hw);
                } else {
                    gemm(CblasTrans, CblasNoTrans, k, hw, g.out_channels, Real(1), weight, k, dyt,
                         hw, Real(0), dcol.data(), hw);
                    col2im(g, dcol.data(), t_full, ho_n, wo_n, *dx_acc);
                }
            }
        }
    }
    for (int tid = 1; tid < nthreads; ++tid) {
        if (dweight && !dw_local[tid].empty())
            for (std::size_t i = 0; i < g.weight_numel(); ++i) dweight[i] += dw_local[tid][i];
        if (dx && !dx_local[tid].empty()) add_inplace(*dx, dx_local[tid]);
    }
}

template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& x, int ft, int fs) {
    const int t_in = x.frames(), c = x.channels(), h = x.height(), w = x.width();
    Tensor<Real> y({t_in * ft, c, h * fs, w * fs});
    const int wo = w * fs;
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < t_in * ft; ++t) {
        for (int ci = 0; ci < c; ++ci) {
            const Real* src = x.plane_ptr(t / ft, ci);
            Real* dst = y.plane_ptr(t, ci);
            for (int i = 0; i < h * fs; ++i) {
                const Real* srow = src + static_cast<std::size_t>(i / fs) * w;
                Real* drow = dst + static_cast<std::size_t>(i) * wo;
                for (int j = 0; j < wo; ++j) drow[j] = srow[j / fs];
            }
        }
    }
    return y;
}

template <typename Real>
Tensor<Real> upsample_nearest_backward(const Tensor<Real>& dy, int ft, int fs) {
    const int t_in = dy.frames() / ft, c = dy.channels(), h = dy.height() / fs, w = dy.width() / fs;
    Tensor<Real> dx({t_in, c, h, w});
    const int wo = w * fs;
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < t_in; ++t) {
        for (int ci = 0; ci < c; ++ci) {
            Real* dst = dx.plane_ptr(t, ci);
            for (int r = 0; r < ft; ++r) {
                const Real* src = dy.plane_ptr(t * ft + r, ci);
                for (int i = 0; i < h * fs; ++i) {
                    const Real* srow = src + static_cast<std::size_t>(i) * wo;
                    Real* drow = dst + static_cast<std::size_t>(i / fs) * w;
                    for (int j = 0; j < wo; ++j) drow[j / fs] += srow[j];
                }
            }
        }
    }
    return dx;
}

template void conv3d_forward(const ConvGeometry&, const Tensor<float>&, const float*,
                             const float*, Tensor<float>&);
template void conv3d_forward(const ConvGeometry&, const Tensor<double>&, const double*,
                             const double*, Tensor<double>&);
template void conv3d_backward(const ConvGeometry&, const Tensor<float>&, const float*,
                              const Tensor<float>&, Tensor<float>*, float*, float*);
template void conv3d_backward(const ConvGeometry&, const Tensor<double>&, const double*,
                              const Tensor<double>&, Tensor<double>*, double*, double*);
template Tensor<float> upsample_nearest(const Tensor<float>&, int, int);
template Tensor<double> upsample_nearest(const Tensor<double>&, int, int);
template Tensor<float> upsample_nearest_backward(const Tensor<float>&, int, int);
template Tensor<double> upsample_nearest_backward(const Tensor<double>&, int, int);

}  // namespace kernels

namespace reference {

template <typename Real>
void conv3d_forward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                    const Real* bias, Tensor<Real>& y) {
    g.validate(x.shape());
    y = Tensor<Real>(g.output_shape(x.shape()));
    const int h_in = x.height(), w_in = x.width();
    for (int t = 0; t < y.frames(); ++t)
        for (int co = 0; co < g.out_channels; ++co)
            for (int ho = 0; ho < y.height(); ++ho)
                for (int wo = 0; wo < y.width(); ++wo) {
                    double acc = bias ? static_cast<double>(bias[co]) : 0.0;
                    for (int ci = 0; ci < g.in_channels; ++ci)
                        for (int dt = 0; dt < g.kt; ++dt) {
                            const int src_t = g.source_frame(t + g.skip_leading, dt);
                            for (int dh = 0; dh < g.kh; ++dh) {
                                const int hi = ho * g.sh + dh - g.pad_h();
                                if (hi < 0 || hi >= h_in) continue;
                                for (int dw = 0; dw < g.kw; ++dw) {
                                    const int wi = wo * g.sw + dw - g.pad_w();
                                    if (wi < 0 || wi >= w_in) continue;
                                    const std::size_t widx =
                                        (((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kt + dt) * g.kh + dh) * g.kw + dw;
                                    acc += static_cast<double>(weight[widx]) *
                                           static_cast<double>(x.at(src_t, ci, hi, wi));
                                }
                            }
                        }
                    y.at(t, co, ho, wo) = static_cast<Real>(acc);
                }
}

template <typename Real>
void conv3d_backward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                     const Tensor<Real>& dy, Tensor<Real>* dx, Real* dweight, Real* dbias) {
    g.validate(x.shape());
    if (dy.shape() != g.output_shape(x.shape())) throw ShapeError("conv3d backward: dy shape");
    if (dx && !dx->same_shape(x)) *dx = Tensor<Real>(x.shape());
    const int h_in = x.height(), w_in = x.width();
    for (int t = 0; t < dy.frames(); ++t)
        for (int co = 0; co < g.out_channels; ++co)
            for (int ho = 0; ho < dy.height(); ++ho)
                for (int wo = 0; wo < dy.width(); ++wo) {
                    const Real gy = dy.at(t, co, ho, wo);
                    if (dbias) dbias[co] += gy;
                    for (int ci = 0; ci < g.in_channels; ++ci)
                        for (int dt = 0; dt < g.kt; ++dt) {
                            const int src_t = g.source_frame(t + g.skip_leading, dt);
                            for (int dh = 0; dh < g.kh; ++dh) {
                                const int hi = ho * g.sh + dh - g.pad_h();
                                if (hi < 0 || hi >= h_in) continue;
                                for (int dw = 0; dw < g.kw; ++dw) {
                                    const int wi = wo * g.sw + dw - g.pad_w();
                                    if (wi < 0 || wi >= w_in) continue;
                                    const std::size_t widx =
                                        (((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kt + dt) * g.kh + dh) * g.kw + dw;
                                    if (dweight) dweight[widx] += gy * x.at(src_t, ci, hi, wi);
                                    if (dx) dx->at(src_t, ci, hi, wi) += gy * weight[widx];
                                }
                            }
                        }
                }
}

template void conv3d_forward(const ConvGeometry&, const Tensor<float>&, const float*,
                             const float*, Tensor<float>&);
template void conv3d_forward(const ConvGeometry&, const Tensor<double>&, const double*,
                             const double*, Tensor<double>&);
template void conv3d_backward(const ConvGeometry&, const Tensor<float>&, const float*,
                              const Tensor<float>&, Tensor<float>*, float*, float*);
template void conv3d_backward(const ConvGeometry&, const Tensor<double>&, const double*,
                              const Tensor<double>&, Tensor<double>*, double*, double*);

}  // namespace reference

}  // namespace vtok

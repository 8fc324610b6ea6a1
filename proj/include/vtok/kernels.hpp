#pragma once

#include "vtok/tensor.hpp"

namespace vtok {

// Geometry of a causal 3-D convolution. Time is padded only at the start with
// kt - 1 copies of frame 0; space is zero-padded by k/2 on each side.
struct ConvGeometry {
    int in_channels = 0;
    int out_channels = 0;
    int kt = 1, kh = 1, kw = 1;
    int st = 1, sh = 1, sw = 1;
    // Leading output frames that are never produced (efficient upsampling
    // drops the padding frame this way instead of computing it).
    int skip_leading = 0;

    int pad_h() const { return kh / 2; }
    int pad_w() const { return kw / 2; }
    int full_out_frames(int t) const { return (t - 1) / st + 1; }
    int out_frames(int t) const { return full_out_frames(t) - skip_leading; }
    int out_height(int h) const { return (h + 2 * pad_h() - kh) / sh + 1; }
    int out_width(int w) const { return (w + 2 * pad_w() - kw) / sw + 1; }
    int patch_size() const { return in_channels * kt * kh * kw; }
    std::size_t weight_numel() const {
        return static_cast<std::size_t>(out_channels) * static_cast<std::size_t>(patch_size());
    }
    Shape weight_shape() const { return {out_channels, in_channels, kt, kh, kw}; }
    Shape output_shape(const Shape& in) const {
        return {out_frames(in[0]), out_channels, out_height(in[2]), out_width(in[3])};
    }
    // Input frame read by temporal tap dt of (unskipped) output frame t.
    int source_frame(int t_out_full, int dt) const {
        const int padded = t_out_full * st + dt;
        const int src = padded - (kt - 1);
        return src < 0 ? 0 : src;
    }
    void validate(const Shape& in) const;
};

namespace kernels {

// OpenMP + BLAS implementation used by the model.
template <typename Real>
void conv3d_forward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                    const Real* bias, Tensor<Real>& y);

// dx may be null (input gradient not needed); dweight/dbias may be null
// (parameters frozen). Gradients are accumulated, not overwritten.
template <typename Real>
void conv3d_backward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                     const Tensor<Real>& dy, Tensor<Real>* dx, Real* dweight, Real* dbias);

// Nearest-neighbour duplication: time by ft, space by fs.
template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& x, int ft, int fs);
template <typename Real>
Tensor<Real> upsample_nearest_backward(const Tensor<Real>& dy, int ft, int fs);

}  // namespace kernels

// Direct-loop kernels kept as the oracle for the parallel path.
namespace reference {

template <typename Real>
void conv3d_forward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                    const Real* bias, Tensor<Real>& y);

template <typename Real>
void conv3d_backward(const ConvGeometry& g, const Tensor<Real>& x, const Real* weight,
                     const Tensor<Real>& dy, Tensor<Real>* dx, Real* dweight, Real* dbias);

}  // namespace reference

}  // namespace vtok

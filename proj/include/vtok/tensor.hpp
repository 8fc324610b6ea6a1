#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtok {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Frame counts that violate a 1 + k*N or subsampling constraint.
class DivisibilityError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// Dense row-major tensor. Video activations are 4-D [T, C, H, W].
template <typename Real>
class Tensor {
  public:
    using value_type = Real;

    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(std::initializer_list<int> shape, Real fill = Real(0))
        : Tensor(Shape(shape), fill) {}

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Video accessors (rank 4).
    int frames() const { return dim(0); }
    int channels() const { return dim(1); }
    int height() const { return dim(2); }
    int width() const { return dim(3); }
    std::size_t frame_numel() const { return numel() / static_cast<std::size_t>(dim(0)); }
    std::size_t plane_numel() const {
        return static_cast<std::size_t>(dim(2)) * static_cast<std::size_t>(dim(3));
    }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    std::span<Real> span() { return data_; }
    std::span<const Real> span() const { return data_; }

    Real* frame_ptr(int t) { return data_.data() + static_cast<std::size_t>(t) * frame_numel(); }
    const Real* frame_ptr(int t) const {
        return data_.data() + static_cast<std::size_t>(t) * frame_numel();
    }
    Real* plane_ptr(int t, int c) {
        return frame_ptr(t) + static_cast<std::size_t>(c) * plane_numel();
    }
    const Real* plane_ptr(int t, int c) const {
        return frame_ptr(t) + static_cast<std::size_t>(c) * plane_numel();
    }

    Real& operator[](std::size_t i) { return data_[i]; }
    const Real& operator[](std::size_t i) const { return data_[i]; }

    Real& at(int t, int c, int h, int w) { return data_[offset(t, c, h, w)]; }
    const Real& at(int t, int c, int h, int w) const { return data_[offset(t, c, h, w)]; }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
    void reshape(Shape s) {
        if (shape_numel(s) != numel())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        shape_ = std::move(s);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        for (std::size_t i = 0; i < numel(); ++i) out[i] = static_cast<Other>(data_[i]);
        return out;
    }

  private:
    std::size_t offset(int t, int c, int h, int w) const {
        return ((static_cast<std::size_t>(t) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<Real> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename Real>
void add_inplace(Tensor<Real>& a, const Tensor<Real>& b) {
    require_same_shape(a, b, "add");
    Real* pa = a.data();
    const Real* pb = b.data();
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) pa[i] += pb[i];
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    Tensor<Real> out = a;
    add_inplace(out, b);
    return out;
}

// Frames [begin, end) of a video tensor.
template <typename Real>
Tensor<Real> slice_frames(const Tensor<Real>& x, int begin, int end) {
    if (begin < 0 || end > x.frames() || begin >= end)
        throw ShapeError("slice_frames [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_str(x.shape()));
    Shape s = x.shape();
    s[0] = end - begin;
    Tensor<Real> out(s);
    std::copy(x.frame_ptr(begin), x.frame_ptr(begin) + out.numel(), out.data());
    return out;
}

template <typename Real>
double max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        m = std::max(m, d < 0 ? -d : d);
    }
    return m;
}

template <typename Real>
bool bitwise_equal(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (!a.same_shape(b)) return false;
    return std::equal(a.data(), a.data() + a.numel(), b.data());
}

}  // namespace vtok

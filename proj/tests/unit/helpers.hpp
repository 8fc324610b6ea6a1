#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "vtok/layers.hpp"
#include "vtok/model.hpp"

namespace testutil {

using vtok::Tensor;

template <typename R>
Tensor<R> randn(vtok::Shape s, std::uint64_t seed, double scale = 1.0) {
    Tensor<R> t(std::move(s));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<R>(nd(rng));
    return t;
}

inline vtok::StagePlan tiny_plan(int k = 4, bool mixing = true) {
    vtok::StagePlan p;
    p.k = k;
    p.widths = {4, 8, 8};
    p.res_units = 1;
    p.latent_channels = 4;
    p.mixing = mixing;
    return p;
}

inline vtok::TokenizerModel tiny_model(int k, bool mixing = true, std::uint64_t seed = 1) {
    vtok::TokenizerModel m = vtok::TokenizerModel::build(tiny_plan(4), seed);
    for (int kk = 8; kk <= k; kk *= 2) m = vtok::TokenizerModel::grow(m, tiny_plan(kk, mixing), seed + kk);
    return m;
}

// Scratch directory unique to one test case.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("vtok_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

// Central differences of L(v) = <probe, f()> with respect to every entry of v.
inline Tensor<double> numeric_grad(Tensor<double>& v, const Tensor<double>& probe,
                                   const std::function<Tensor<double>()>& f, double h = 1e-6) {
    Tensor<double> g(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const double old = v[i];
        v[i] = old + h;
        const double up = dot(probe, f());
        v[i] = old - h;
        const double down = dot(probe, f());
        v[i] = old;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double rel_error(const Tensor<double>& a, const Tensor<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i] + b[i] * b[i];
    }
    return den == 0 ? 0 : std::sqrt(num) / std::sqrt(den);
}

}  // namespace testutil

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "deepjscc/common.hpp"
#include "deepjscc/rng.hpp"

namespace deepjscc {

// Dense NCHW tensor. Vectors are stored as [n, d, 1, 1]. The flat layout is
// image-major, channel-planar: element (n, c, h, w) lives at
// ((n*C + c)*H + h)*W + w. All pipeline code relies on the fact that one
// image's data is contiguous and channel planes are contiguous within it.
template <typename T>
class Tensor {
  public:
    Tensor() : dims_{0, 0, 0, 0} {}
    Tensor(int n, int c, int h, int w) : dims_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w) {}

    static Tensor vectors(int n, int d) { return Tensor(n, d, 1, 1); }

    int n() const { return dims_[0]; }
    int c() const { return dims_[1]; }
    int h() const { return dims_[2]; }
    int w() const { return dims_[3]; }
    std::int64_t per_image() const { return static_cast<std::int64_t>(dims_[1]) * dims_[2] * dims_[3]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* image(int n) { return data_.data() + n * per_image(); }
    const T* image(int n) const { return data_.data() + n * per_image(); }

    T& operator[](std::int64_t i) { return data_[i]; }
    const T& operator[](std::int64_t i) const { return data_[i]; }
    T& at(int n, int c, int h, int w) { return data_[((static_cast<std::int64_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w]; }
    const T& at(int n, int c, int h, int w) const {
        return data_[((static_cast<std::int64_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    void zero() { std::fill(data_.begin(), data_.end(), T(0)); }
    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    // Reinterpret the same buffer with a new shape of identical volume.
    Tensor reshaped(int n, int c, int h, int w) const {
        if (static_cast<std::int64_t>(n) * c * h * w != size()) throw ArgumentError("reshape: volume mismatch");
        Tensor out = *this;
        out.dims_ = {n, c, h, w};
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(dims_[0], dims_[1], dims_[2], dims_[3]);
        for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    void fill_normal(RngStream& rng, double stddev) {
        for (auto& v : data_) v = static_cast<T>(rng.normal() * stddev);
    }

    Tensor& operator+=(const Tensor& o) {
        for (std::int64_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (std::int64_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

  private:
    std::array<int, 4> dims_;
    std::vector<T> data_;
};

// Gathers images `idx` from `src` into a new batch, preserving layout.
template <typename T>
Tensor<T> gather_images(const Tensor<T>& src, const std::vector<int>& idx) {
    Tensor<T> out(static_cast<int>(idx.size()), src.c(), src.h(), src.w());
    const std::int64_t stride = src.per_image();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.image(idx[i]), stride, out.image(static_cast<int>(i)));
    return out;
}

}  // namespace deepjscc

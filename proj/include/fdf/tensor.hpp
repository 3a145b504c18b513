#ifndef FDF_TENSOR_HPP
#define FDF_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fdf/errors.hpp"

namespace fdf {

// Dense row-major tensor. Shape is dynamic; data is a flat array with
// data.size() == product(shape).
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel(), T(0));
    }

    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel())
            throw DimensionError("tensor data length does not match shape");
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }

    int dim(std::size_t i) const { return shape[i]; }

    // 3-d accessors (H, W, C), used for image planes and conv activations.
    T& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + c];
    }
    T at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + c];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace fdf

#endif

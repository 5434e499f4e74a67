#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pwdlact/grid.hpp"

namespace pwdlact {

/// Dense row-major float tensor; shape semantics are by convention
/// (activations NCHW, conv weights [Cout,Cin,K,K], vectors [D]).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        v.assign(n, 0.0f);
    }

    size_t size() const { return v.size(); }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// Named handle onto a module's weight and gradient buffers.
struct Param {
    std::string name;
    Tensor* w = nullptr;
    Tensor* g = nullptr;
};

inline std::string shape_str(const Tensor& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i)
        s += (i ? "," : "") + std::to_string(t.shape[i]);
    return s + "]";
}

}  // namespace pwdlact

#pragma once

#include <cmath>
#include <vector>

#include "radiomamba/rng.hpp"
#include "radiomamba/tensor.hpp"

namespace testsupport {

using radiomamba::Rng;
using radiomamba::Shape;
using radiomamba::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
    std::vector<T> v(radiomamba::shape_size(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>::from_data(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
    return m;
}

template <typename T>
double max_abs(const Tensor<T>& a) {
    double m = 0;
    for (T v : a.values()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

}  // namespace testsupport

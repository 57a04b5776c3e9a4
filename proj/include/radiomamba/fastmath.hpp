#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace radiomamba {

// Branch-free expf for the selective-scan inner loop. Argument reduction to
// 2^i * 2^f with f in [-0.5, 0.5] and a degree-6 polynomial for 2^f; max
// relative error is ~1.3e-7, on par with 1-ulp libm expf for float32 work.
// No libcall, so the compiler can vectorize loops that use it.
inline float fast_expf(float x) {
    x = std::min(std::max(x, -87.0f), 88.0f);
    const float t = x * 1.442695040888963f;  // log2(e)
    const float fi = std::floor(t + 0.5f);
    const float f = t - fi;
    float p = 1.5403530393e-4f;
    p = p * f + 1.3333558146e-3f;
    p = p * f + 9.6181291918e-3f;
    p = p * f + 5.5504108664e-2f;
    p = p * f + 2.4022650696e-1f;
    p = p * f + 6.9314718056e-1f;
    p = p * f + 1.0f;
    const std::int32_t i = static_cast<std::int32_t>(fi);
    const float s = std::bit_cast<float>((i + 127) << 23);
    return p * s;
}

// Scalar-type dispatch used by the scan kernels: float32 takes the fast
// path, float64 (the verification precision) stays on libm.
template <typename T>
inline T scan_exp(T x) {
    if constexpr (std::is_same_v<T, float>) {
        return fast_expf(x);
    } else {
        return std::exp(x);
    }
}

}  // namespace radiomamba

#include <cmath>

#include "posbias/simd.hpp"

namespace posbias::simd {
namespace {

double dot_scalar(const float* a, const float* b, std::size_t n)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

double squared_norm_scalar(const float* a, std::size_t n)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    }
    return acc;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void gate_mix_scalar(float alpha, const float* a, const float* b, float* out, std::size_t n)
{
    const float beta = 1.0F - alpha;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = alpha * a[i] + beta * b[i];
    }
}

double rbf_sum_scalar(const double* x, std::size_t n, double mu, double inv_two_sigma_sq)
{
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = x[j] - mu;
        acc += std::exp(-d * d * inv_two_sigma_sq);
    }
    return acc;
}

}  // namespace

const kernel_table& scalar_kernels()
{
    static const kernel_table table{
        "scalar", dot_scalar, squared_norm_scalar, axpy_scalar, gate_mix_scalar, rbf_sum_scalar,
    };
    return table;
}

}  // namespace posbias::simd

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops shared by the encoder, the kernel scorer and the
// term-similarity probe. Every entry point has a scalar reference
// implementation; an AVX2/FMA variant is picked at runtime when the CPU
// supports it. Set POSBIAS_SIMD=scalar in the environment to force the
// reference path.

namespace posbias::simd {

struct kernel_table {
    std::string_view name;

    // Sum of a[i]*b[i], accumulated in double. Sizes must match.
    double (*dot)(const float* a, const float* b, std::size_t n);

    // Sum of a[i]^2, accumulated in double.
    double (*squared_norm)(const float* a, std::size_t n);

    // y[i] += alpha * x[i]
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);

    // out[i] = alpha * a[i] + (1 - alpha) * b[i]; alpha == 1 returns a
    // bit-exactly, alpha == 0 returns b bit-exactly.
    void (*gate_mix)(float alpha, const float* a, const float* b, float* out, std::size_t n);

    // Sum over j of exp(-(x[j] - mu)^2 * inv_two_sigma_sq).
    double (*rbf_sum)(const double* x, std::size_t n, double mu, double inv_two_sigma_sq);
};

const kernel_table& scalar_kernels();

/// AVX2 kernels if compiled in and supported by this CPU, nullptr otherwise.
const kernel_table* avx2_kernels();

/// The table used by the library.
const kernel_table& active();

/// Overrides the active table (tests and benchmarking).
void set_active(const kernel_table& table);

// Convenience wrappers over active().

inline double dot(std::span<const float> a, std::span<const float> b)
{
    return active().dot(a.data(), b.data(), a.size());
}

inline double squared_norm(std::span<const float> a)
{
    return active().squared_norm(a.data(), a.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y)
{
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void gate_mix(float alpha, std::span<const float> a, std::span<const float> b, std::span<float> out)
{
    active().gate_mix(alpha, a.data(), b.data(), out.data(), out.size());
}

inline double rbf_sum(std::span<const double> x, double mu, double inv_two_sigma_sq)
{
    return active().rbf_sum(x.data(), x.size(), mu, inv_two_sigma_sq);
}

/// Cosine similarity with the zero-vector convention (returns 0 when either
/// norm is 0). Computed as dot / sqrt(|a|^2 |b|^2) so cos(v, v) == 1 exactly.
inline double cosine_from_parts(double dot_ab, double sq_a, double sq_b)
{
    if (sq_a == 0.0 || sq_b == 0.0) {
        return 0.0;
    }
    double c = dot_ab / std::sqrt(sq_a * sq_b);
    if (c > 1.0) {
        c = 1.0;
    } else if (c < -1.0) {
        c = -1.0;
    }
    return c;
}

inline double cosine(std::span<const float> a, std::span<const float> b)
{
    return cosine_from_parts(dot(a, b), squared_norm(a), squared_norm(b));
}

}  // namespace posbias::simd

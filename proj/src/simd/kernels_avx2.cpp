// Compiled with -mavx2 -mfma. Only reached through avx2_kernels(), which
// checks CPU support first.

#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "posbias/simd.hpp"

namespace posbias::simd::detail {
namespace {

inline double hsum(__m256d v)
{
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const float* a, const float* b, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        const __m256 va0 = _mm256_loadu_ps(a + i);
        const __m256 vb0 = _mm256_loadu_ps(b + i);
        const __m256 va1 = _mm256_loadu_ps(a + i + 8);
        const __m256 vb1 = _mm256_loadu_ps(b + i + 8);
        acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va0)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(vb0)), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va0, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(vb0, 1)), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va1)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(vb1)), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va1, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(vb1, 1)), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)), _mm256_cvtps_pd(_mm_loadu_ps(b + i)), acc0);
    }
    double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

double squared_norm_avx2(const float* a, std::size_t n)
{
    return dot_avx2(a, a, n);
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n)
{
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(alpha, x[i], y[i]);
    }
}

void gate_mix_avx2(float alpha, const float* a, const float* b, float* out, std::size_t n)
{
    const float beta = 1.0F - alpha;
    const __m256 va = _mm256_set1_ps(alpha);
    const __m256 vb = _mm256_set1_ps(beta);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 scaled_b = _mm256_mul_ps(vb, _mm256_loadu_ps(b + i));
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(a + i), scaled_b));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(alpha, a[i], beta * b[i]);
    }
}

// exp(x) for x in [-708, 709]: x = k*ln2 + r with |r| <= ln2/2, exp(r) from
// its Taylor series through r^13 (truncation below 1e-19 relative), then
// scaled by 2^k through the exponent bits.
inline __m256d exp_pd(__m256d x)
{
    const __m256d lo_clamp = _mm256_set1_pd(-708.0);
    const __m256d hi_clamp = _mm256_set1_pd(709.0);
    x = _mm256_max_pd(_mm256_min_pd(x, hi_clamp), lo_clamp);

    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

    const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    // Horner over 1/i! for i = 13 .. 0.
    static constexpr double inv_fact[] = {
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
        1.0 / 3628800.0,
        1.0 / 39916800.0,
        1.0 / 479001600.0,
        1.0 / 6227020800.0,
    };
    __m256d p = _mm256_set1_pd(inv_fact[13]);
    for (int i = 12; i >= 0; --i) {
        p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(inv_fact[i]));
    }

    // 2^k: k + 1.5*2^52 places k in the low mantissa bits.
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);
    const __m256i k_int = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)), _mm256_castpd_si256(magic));
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(k_int, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

double rbf_sum_avx2(const double* x, std::size_t n, double mu, double inv_two_sigma_sq)
{
    const __m256d vmu = _mm256_set1_pd(mu);
    const __m256d vneg = _mm256_set1_pd(-inv_two_sigma_sq);
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + j), vmu);
        acc = _mm256_add_pd(acc, exp_pd(_mm256_mul_pd(_mm256_mul_pd(d, d), vneg)));
    }
    double sum = hsum(acc);
    for (; j < n; ++j) {
        const double d = x[j] - mu;
        sum += std::exp(-d * d * inv_two_sigma_sq);
    }
    return sum;
}

}  // namespace

const kernel_table& avx2_table()
{
    static const kernel_table table{
        "avx2", dot_avx2, squared_norm_avx2, axpy_avx2, gate_mix_avx2, rbf_sum_avx2,
    };
    return table;
}

}  // namespace posbias::simd::detail

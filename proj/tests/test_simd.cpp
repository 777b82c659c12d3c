#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "posbias/kernelrank.hpp"
#include "posbias/simd.hpp"

using namespace posbias;

namespace {

std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<float> u(-2.0F, 2.0F);
    std::vector<float> v(n);
    for (auto& x : v) {
        x = u(rng);
    }
    return v;
}

class SimdEquivalence : public ::testing::Test {
  protected:
    void SetUp() override
    {
        previous = &simd::active();
        vec = simd::avx2_kernels();
        if (vec == nullptr) {
            GTEST_SKIP() << "AVX2 not available on this CPU";
        }
    }
    void TearDown() override { simd::set_active(*previous); }

    const simd::kernel_table& ref = simd::scalar_kernels();
    const simd::kernel_table* vec = nullptr;
    const simd::kernel_table* previous = nullptr;
};

}  // namespace

TEST_F(SimdEquivalence, ReductionsAndUpdates)
{
    std::mt19937_64 rng(5);
    for (std::size_t n = 0; n <= 67; ++n) {
        const auto a = random_floats(n, rng);
        const auto b = random_floats(n, rng);
        EXPECT_NEAR(ref.dot(a.data(), b.data(), n), vec->dot(a.data(), b.data(), n), 1e-9) << n;
        EXPECT_NEAR(ref.squared_norm(a.data(), n), vec->squared_norm(a.data(), n), 1e-9) << n;

        auto y1 = b;
        auto y2 = b;
        ref.axpy(0.37F, a.data(), y1.data(), n);
        vec->axpy(0.37F, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_NEAR(y1[i], y2[i], 1e-6F);
        }

        std::vector<float> g1(n);
        std::vector<float> g2(n);
        for (float alpha : {0.0F, 0.3F, 1.0F}) {
            ref.gate_mix(alpha, a.data(), b.data(), g1.data(), n);
            vec->gate_mix(alpha, a.data(), b.data(), g2.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_NEAR(g1[i], g2[i], 1e-6F);
                if (alpha == 1.0F) {
                    EXPECT_EQ(g2[i], a[i]);
                } else if (alpha == 0.0F) {
                    EXPECT_EQ(g2[i], b[i]);
                }
            }
        }

        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a[i] / 2.0;
        }
        EXPECT_NEAR(ref.rbf_sum(x.data(), n, 0.2, 50.0), vec->rbf_sum(x.data(), n, 0.2, 50.0), 1e-12) << n;
    }
}

TEST_F(SimdEquivalence, WholeScore)
{
    std::mt19937_64 rng(6);
    const auto cfg = kernel_config::evenly_spaced();
    const auto w = score_weights::uniform(cfg.size());
    for (int t = 0; t < 20; ++t) {
        const auto q = testkit::random_matrix(5, 33, rng);
        const auto p = testkit::random_matrix(40, 33, rng);
        simd::set_active(ref);
        const double s_ref = score(q, p, cfg, w);
        simd::set_active(*vec);
        const double s_vec = score(q, p, cfg, w);
        EXPECT_NEAR(s_ref, s_vec, 1e-6);
    }
}

TEST(Simd, ScalarCosineConventions)
{
    const std::vector<float> v{0.3F, -1.2F, 4.0F};
    const std::vector<float> z{0.0F, 0.0F, 0.0F};
    EXPECT_EQ(simd::cosine(v, v), 1.0);
    EXPECT_EQ(simd::cosine(v, z), 0.0);
    EXPECT_EQ(simd::scalar_kernels().dot(v.data(), v.data(), 0), 0.0);
}

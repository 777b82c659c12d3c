#include <atomic>
#include <cstdlib>
#include <string_view>
#include <thread>

#include "posbias/parallel.hpp"
#include "posbias/simd.hpp"

namespace posbias {
namespace simd {

#ifdef POSBIAS_HAVE_AVX2_KERNELS
namespace detail {
const kernel_table& avx2_table();
}
#endif

const kernel_table* avx2_kernels()
{
#ifdef POSBIAS_HAVE_AVX2_KERNELS
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    if (supported) {
        return &detail::avx2_table();
    }
#endif
    return nullptr;
}

namespace {

const kernel_table* pick_default()
{
    const char* forced = std::getenv("POSBIAS_SIMD");
    if (forced != nullptr && std::string_view(forced) == "scalar") {
        return &scalar_kernels();
    }
    if (const kernel_table* t = avx2_kernels()) {
        return t;
    }
    return &scalar_kernels();
}

std::atomic<const kernel_table*>& active_slot()
{
    static std::atomic<const kernel_table*> slot{pick_default()};
    return slot;
}

}  // namespace

const kernel_table& active()
{
    return *active_slot().load(std::memory_order_relaxed);
}

void set_active(const kernel_table& table)
{
    active_slot().store(&table, std::memory_order_relaxed);
}

}  // namespace simd

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_thread_count(unsigned n)
{
    if (n == 0) {
        n = std::max(1U, std::thread::hardware_concurrency());
    }
    g_threads.store(n, std::memory_order_relaxed);
}

unsigned thread_count()
{
    return g_threads.load(std::memory_order_relaxed);
}

}  // namespace posbias

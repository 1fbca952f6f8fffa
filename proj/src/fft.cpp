#include "craft/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace craft::fft {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
// Twiddles come from std::polar per index rather than repeated
// multiplication, which keeps the error at a few ulps per stage.
void fft_pow2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    std::vector<cd> tw(n / 2);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k)
            tw[k] = std::polar(1.0, ang * static_cast<double>(k));
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + half] * tw[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (cd& z : a) z *= scale;
    }
}

// Bluestein's chirp-z transform: an arbitrary-length DFT expressed as one
// circular convolution of power-of-two size m >= 2n-1. The chirp and the
// transformed kernel depend only on n, so they are cached per length.
struct BluesteinPlan {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<cd> chirp;       // exp(-i*pi*k^2/n), k in [0, n)
    std::vector<cd> kernel_fft;  // FFT_m of the wrapped conjugate chirp
};

std::shared_ptr<const BluesteinPlan> bluestein_plan(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;

    auto plan = std::make_shared<BluesteinPlan>();
    plan->n = n;
    plan->m = std::bit_ceil(2 * n - 1);
    plan->chirp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k*k mod 2n keeps the argument small before the trig call.
        const auto r = static_cast<double>((k * k) % (2 * n));
        plan->chirp[k] = std::polar(1.0, -kPi * r / static_cast<double>(n));
    }
    std::vector<cd> kernel(plan->m, cd{0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) {
        const cd b = std::conj(plan->chirp[k]);
        kernel[k] = b;
        if (k != 0) kernel[plan->m - k] = b;
    }
    fft_pow2(kernel, false);
    plan->kernel_fft = std::move(kernel);

    cache.emplace(n, plan);
    return cache.at(n);
}

std::vector<cd> dft_bluestein(std::span<const double> x) {
    const std::size_t n = x.size();
    const auto plan = bluestein_plan(n);
    std::vector<cd> a(plan->m, cd{0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * plan->chirp[k];
    fft_pow2(a, false);
    for (std::size_t k = 0; k < plan->m; ++k) a[k] *= plan->kernel_fft[k];
    fft_pow2(a, true);
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = plan->chirp[k] * a[k];
    return out;
}

} // namespace

std::vector<std::complex<double>> truncated_rfft(std::span<const double> x, std::size_t f) {
    const std::size_t n = x.size();
    if (n == 0) throw std::invalid_argument("truncated_rfft: empty input");
    if (f < 1 || f > n / 2 + 1)
        throw std::invalid_argument("truncated_rfft: frequency cutoff out of range");

    std::vector<cd> bins;
    if (std::has_single_bit(n)) {
        bins.assign(x.begin(), x.end());
        fft_pow2(bins, false);
    } else {
        bins = dft_bluestein(x);
    }
    bins.resize(f);
    return bins;
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
    return truncated_rfft(x, x.size() / 2 + 1);
}

} // namespace craft::fft

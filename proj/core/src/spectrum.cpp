#include "halo/spectrum.hpp"

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace halo {

namespace {
// FFTW planning is not thread-safe; execution of a private plan is.
std::mutex plan_mutex;
}  // namespace

Eigen::ArrayXXd dft_magnitude(const Image& gray) {
    if (gray.channels != 1)
        throw std::invalid_argument("dft_magnitude: expects a single-channel image");
    const int h = gray.height, w = gray.width;
    if (h <= 0 || w <= 0) throw std::invalid_argument("dft_magnitude: empty image");

    std::vector<std::complex<double>> in(static_cast<std::size_t>(h) * w);
    std::vector<std::complex<double>> out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            in[static_cast<std::size_t>(y) * w + x] = gray.at(x, y, 0);

    {
        std::lock_guard<std::mutex> lock(plan_mutex);
        fftw_plan plan = fftw_plan_dft_2d(
            h, w, reinterpret_cast<fftw_complex*>(in.data()),
            reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        if (!plan) throw std::runtime_error("dft_magnitude: FFTW planning failed");
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }

    const double norm = 1.0 / (static_cast<double>(h) * w);
    Eigen::ArrayXXd mag(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            mag(y, x) = std::abs(out[static_cast<std::size_t>(y) * w + x]) * norm;
    return mag;
}

double bin_frequency(int i, int n) {
    int signed_i = i <= n / 2 ? i : i - n;
    if (n % 2 == 0 && i == n / 2) signed_i = -n / 2;
    return static_cast<double>(signed_i) / n;
}

}  // namespace halo

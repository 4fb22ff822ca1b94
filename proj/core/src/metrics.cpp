#include "halo/metrics.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "halo/spectrum.hpp"

namespace halo {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Eigen::MatrixXd channel_matrix(const Image& img, int c) {
    Eigen::MatrixXd m(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) m(y, x) = img.at(x, y, c);
    return m;
}

// valid-mode separable Gaussian filtering
Eigen::MatrixXd gauss_valid(const Eigen::MatrixXd& m) {
    Eigen::Matrix<double, kWindow, 1> w;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    }
    w /= w.sum();

    const Eigen::Index rows = m.rows(), cols = m.cols();
    Eigen::MatrixXd horiz(rows, cols - kWindow + 1);
    for (Eigen::Index x = 0; x < horiz.cols(); ++x)
        horiz.col(x) = m.middleCols(x, kWindow) * w;
    Eigen::MatrixXd out(rows - kWindow + 1, horiz.cols());
    for (Eigen::Index y = 0; y < out.rows(); ++y)
        out.row(y) = w.transpose() * horiz.middleRows(y, kWindow);
    return out;
}

double ssim_channel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::MatrixXd mu_a = gauss_valid(a);
    const Eigen::MatrixXd mu_b = gauss_valid(b);
    const Eigen::MatrixXd raw_aa = gauss_valid(a.cwiseProduct(a));
    const Eigen::MatrixXd raw_bb = gauss_valid(b.cwiseProduct(b));
    const Eigen::MatrixXd raw_ab = gauss_valid(a.cwiseProduct(b));

    const Eigen::ArrayXXd var_a = raw_aa.array() - mu_a.array().square();
    const Eigen::ArrayXXd var_b = raw_bb.array() - mu_b.array().square();
    const Eigen::ArrayXXd cov = raw_ab.array() - (mu_a.array() * mu_b.array());

    const Eigen::ArrayXXd num =
        (2.0 * mu_a.array() * mu_b.array() + kC1) * (2.0 * cov + kC2);
    const Eigen::ArrayXXd den =
        (mu_a.array().square() + mu_b.array().square() + kC1) * (var_a + var_b + kC2);
    return (num / den).mean();
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr image shapes differ");
    if (!(peak > 0)) throw std::invalid_argument("psnr peak must be > 0");
    if (a.data.empty()) throw std::invalid_argument("psnr on empty image");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim image shapes differ");
    if (a.width < kWindow || a.height < kWindow)
        throw std::invalid_argument("ssim needs images at least 11x11");
    double sum = 0;
    for (int c = 0; c < a.channels; ++c)
        sum += ssim_channel(channel_matrix(a, c), channel_matrix(b, c));
    return sum / a.channels;
}

double hf_energy_ratio(const Image& gray, double radial_cutoff_fraction) {
    if (gray.channels != 1)
        throw std::invalid_argument("hf_energy_ratio expects a single-channel image");
    if (!(radial_cutoff_fraction >= 0))
        throw std::invalid_argument("radial cutoff fraction must be >= 0");
    const Eigen::ArrayXXd mag = dft_magnitude(gray);
    const double cutoff = radial_cutoff_fraction * 0.5;

    double total = 0, high = 0;
    for (int r = 0; r < mag.rows(); ++r) {
        const double fy = bin_frequency(r, static_cast<int>(mag.rows()));
        for (int c = 0; c < mag.cols(); ++c) {
            if (r == 0 && c == 0) continue;
            const double fx = bin_frequency(c, static_cast<int>(mag.cols()));
            const double energy = mag(r, c) * mag(r, c);
            total += energy;
            if (std::hypot(fx, fy) > cutoff) high += energy;
        }
    }
    return total > 0 ? high / total : 0.0;
}

}  // namespace halo

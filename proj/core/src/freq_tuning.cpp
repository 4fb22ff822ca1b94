#include "halo/freq_tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "halo/spectrum.hpp"

namespace halo {

void SpectralCriterionConfig::validate() const {
    if (num_pairs < 1) throw std::invalid_argument("spectral criterion: num_pairs must be >= 1");
    if (!(baseline_angle_deg >= 0)) {
        throw std::invalid_argument("spectral criterion: baseline angle must be >= 0");
    }
    if (!(mask_percentile >= 0 && mask_percentile <= 100)) {
        throw std::invalid_argument("spectral criterion: mask percentile must be in [0, 100]");
    }
    if (!(threshold > 0)) throw std::invalid_argument("spectral criterion: threshold must be > 0");
    if (render_resolution < 8) {
        throw std::invalid_argument("spectral criterion: render resolution must be >= 8");
    }
}

void to_json(nlohmann::json& j, const SpectralCriterionConfig& c) {
    j = nlohmann::json{{"num_pairs", c.num_pairs},
                       {"baseline_angle_deg", c.baseline_angle_deg},
                       {"mask_percentile", c.mask_percentile},
                       {"threshold", c.threshold},
                       {"render_resolution", c.render_resolution},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SpectralCriterionConfig& c) {
    c.num_pairs = j.value("num_pairs", c.num_pairs);
    c.baseline_angle_deg = j.value("baseline_angle_deg", c.baseline_angle_deg);
    c.mask_percentile = j.value("mask_percentile", c.mask_percentile);
    c.threshold = j.value("threshold", c.threshold);
    c.render_resolution = j.value("render_resolution", c.render_resolution);
    c.seed = j.value("seed", c.seed);
}

std::vector<std::pair<Eigen::Matrix4d, Eigen::Matrix4d>> sample_view_pairs(
    const OrbitPoseSampler& poses, const SpectralCriterionConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<std::pair<Eigen::Matrix4d, Eigen::Matrix4d>> pairs;
    pairs.reserve(static_cast<std::size_t>(cfg.num_pairs));
    const double angle = cfg.baseline_angle_deg * std::numbers::pi / 180.0;
    for (int i = 0; i < cfg.num_pairs; ++i) {
        Eigen::Matrix4d base = poses.sample(rng);
        pairs.emplace_back(base, rotate_about_z(base, angle));
    }
    return pairs;
}

namespace {

// Nearest-rank percentile of the flattened magnitudes.
double magnitude_percentile(const Eigen::MatrixXd& mag, double percentile) {
    std::vector<double> values(mag.data(), mag.data() + mag.size());
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::ptrdiff_t>(std::ceil(percentile / 100.0 * n));
    rank = std::clamp<std::ptrdiff_t>(rank, 1, static_cast<std::ptrdiff_t>(values.size()));
    return values[static_cast<std::size_t>(rank - 1)];
}

}  // namespace

double spectral_gap(const Image& gray_a, const Image& gray_b, double mask_percentile) {
    if (gray_a.channels != 1 || gray_b.channels != 1) {
        throw std::invalid_argument("spectral_gap expects single-channel images");
    }
    if (gray_a.width != gray_b.width || gray_a.height != gray_b.height) {
        throw std::invalid_argument("spectral_gap expects images of equal size");
    }
    const Eigen::MatrixXd mag_a = dft_magnitude(gray_a);
    const Eigen::MatrixXd mag_b = dft_magnitude(gray_b);
    const double thr_a = magnitude_percentile(mag_a, mask_percentile);
    const double thr_b = magnitude_percentile(mag_b, mask_percentile);

    double sum_sq = 0;
    std::ptrdiff_t n_unmasked = 0;
    for (Eigen::Index r = 0; r < mag_a.rows(); ++r) {
        for (Eigen::Index c = 0; c < mag_a.cols(); ++c) {
            const bool dc = (r == 0 && c == 0);
            if (dc || mag_a(r, c) > thr_a || mag_b(r, c) > thr_b) continue;
            const double d = mag_a(r, c) - mag_b(r, c);
            sum_sq += d * d;
            ++n_unmasked;
        }
    }
    if (n_unmasked == 0) return 0;
    return 1e4 * std::sqrt(sum_sq) / static_cast<double>(n_unmasked);
}

double criterion_sigma(const PoseRenderFn& render, const OrbitPoseSampler& poses,
                       const SpectralCriterionConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto pairs = sample_view_pairs(poses, cfg, rng);
    double total = 0;
    for (const auto& [pose_a, pose_b] : pairs) {
        const Image gray_a = to_luminance(render(pose_a));
        const Image gray_b = to_luminance(render(pose_b));
        total += spectral_gap(gray_a, gray_b, cfg.mask_percentile);
    }
    return total / static_cast<double>(pairs.size());
}

TuneResult tune_frequency(const TrainShortFn& train_short,
                          const std::vector<EncodingConfig>& candidates,
                          const OrbitPoseSampler& poses, const SpectralCriterionConfig& cfg) {
    if (candidates.empty()) throw std::invalid_argument("tune_frequency: empty candidate list");
    TuneResult result;
    for (const auto& candidate : candidates) {
        const PoseRenderFn render = train_short(candidate);
        const double sigma = criterion_sigma(render, poses, cfg);
        const bool pass = sigma < cfg.threshold;
        result.reports.push_back({candidate, sigma, pass});
        if (pass) {
            result.chosen = candidate;
            return result;
        }
    }
    result.chosen = candidates.back();
    result.fell_through = true;
    return result;
}

}  // namespace halo

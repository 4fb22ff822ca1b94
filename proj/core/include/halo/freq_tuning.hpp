#pragma once

#include <Eigen/Core>
#include <functional>
#include <nlohmann/json.hpp>
#include <utility>
#include <vector>

#include "halo/data.hpp"
#include "halo/encoding.hpp"
#include "halo/image.hpp"
#include "halo/random.hpp"

namespace halo {

struct SpectralCriterionConfig {
    int num_pairs = 4;
    double baseline_angle_deg = 3.0;  // second view rotated about the scene center
    double mask_percentile = 99.0;    // bins above this magnitude percentile are masked
    double threshold = 25.0;
    int render_resolution = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const SpectralCriterionConfig& c);
void from_json(const nlohmann::json& j, SpectralCriterionConfig& c);

// Pose pairs separated by a small rotation about the scene's vertical axis.
std::vector<std::pair<Eigen::Matrix4d, Eigen::Matrix4d>> sample_view_pairs(
    const OrbitPoseSampler& poses, const SpectralCriterionConfig& cfg, Rng& rng);

// Per-bin L2 distance between the two Fourier magnitude spectra after
// masking DC plus every bin that is dominant in either spectrum, scaled by
// 1e4. Equal images give exactly 0; a pure intensity offset also gives 0
// because it lives in the masked DC bin.
double spectral_gap(const Image& gray_a, const Image& gray_b, double mask_percentile);

using PoseRenderFn = std::function<Image(const Eigen::Matrix4d&)>;

// Cross-view spectral consistency: mean spectral_gap over rendered pairs.
// High-frequency fields that overfit sparse views flicker between nearby
// poses and score high; smooth fields score low.
double criterion_sigma(const PoseRenderFn& render, const OrbitPoseSampler& poses,
                       const SpectralCriterionConfig& cfg);

struct CandidateReport {
    EncodingConfig encoding;
    double sigma = 0;
    bool pass = false;
};

struct TuneResult {
    EncodingConfig chosen;
    std::vector<CandidateReport> reports;
    bool fell_through = false;  // no candidate passed; lowest frequency returned
};

// Trains a short-budget field for an encoding candidate and exposes it as a
// pose renderer.
using TrainShortFn = std::function<PoseRenderFn(const EncodingConfig&)>;

// Walks candidates from highest to lowest frequency and returns the first
// whose sigma clears the threshold. Evaluated candidates are reported in
// order; unevaluated ones are absent.
TuneResult tune_frequency(const TrainShortFn& train_short,
                          const std::vector<EncodingConfig>& candidates,
                          const OrbitPoseSampler& poses,
                          const SpectralCriterionConfig& cfg);

}  // namespace halo

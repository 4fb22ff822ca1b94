#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "halo/encoding.hpp"
#include "halo/image.hpp"
#include "halo/nn.hpp"

namespace halo {

// Scalar field over [-1,1]^2: encoded coordinate -> ReLU MLP -> linear
// intensity. Small enough that the whole frequency story fits in a 2D
// picture: the encoding decides what the net can interpolate and how it
// extrapolates, with no geometry in the way.
class ToyField {
public:
    explicit ToyField(EncodingConfig enc, int depth = 4, int width = 128);

    int param_count() const { return param_count_; }
    Eigen::VectorXd init_params(std::uint64_t seed) const;
    const EncodingConfig& encoding() const { return encoder_.config(); }

    struct Cache {
        Eigen::MatrixXd encoded;
        Mlp::Cache mlp;
    };

    // X: 2 x n coordinates. Returns n intensities (unclamped).
    Eigen::ArrayXd forward(const Eigen::VectorXd& params,
                           const Eigen::Ref<const Eigen::MatrixXd>& X,
                           Cache* cache = nullptr) const;
    void backward(const Eigen::VectorXd& params, const Cache& cache,
                  const Eigen::Ref<const Eigen::ArrayXd>& d_out,
                  Eigen::VectorXd& grad) const;

private:
    Encoder encoder_;
    Mlp mlp_;
    LinearLayout head_;
    int param_count_ = 0;
};

struct ToyTrainConfig {
    long iterations = 10000;
    int batch_size = 256;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
    std::uint64_t seed = 0;
};

// Pixel-center coordinates of a width x height grid mapped to [-1,1]^2,
// flattened row-major (row outer, column inner).
Eigen::MatrixXd grid_coords(int width, int height);

// Luminance targets flattened in the same order as grid_coords.
Eigen::ArrayXd image_targets(const Image& img);

// Fits the field to the image with minibatch squared error. `keep` marks
// trainable pixels (empty keeps all); excluded pixels are never read, so
// they may hold anything, including NaN.
Eigen::VectorXd fit_image_field(const Image& img, const ToyField& field,
                                const ToyTrainConfig& cfg,
                                const std::vector<std::uint8_t>& keep = {});

double toy_train_psnr(const Image& img, const ToyField& field,
                      const Eigen::VectorXd& params);

// Field evaluated on a factor-times denser grid, clamped to [0,1].
// factor = 1 reproduces the training resolution.
Image render_dense(const ToyField& field, const Eigen::VectorXd& params, int width,
                   int height, int factor);

struct InterpolationResult {
    Image upsampled;   // field on the dense grid
    Image reference;   // bilinear upsampling of the training image
    double residual_hf_ratio = 0;
};

// Upsamples by evaluating the field densely and reports how much of the
// residual against plain bilinear upsampling lives above the radial cutoff.
InterpolationResult interpolate_experiment(const Image& img, const ToyField& field,
                                           const Eigen::VectorXd& params, int factor = 4,
                                           double radial_cutoff_fraction = 0.25);

// Binary checkerboard with cells_x x cells_y cells; dimensions must divide.
Image make_checkerboard(int width, int height, int cells_x, int cells_y);

// Synthetic training image mixing smooth random waves with hard-edged
// shapes, so it has content on both sides of any frequency cutoff.
Image make_toy_image(int size, std::uint64_t seed);

// Rectangle anchored at the (max x, max y) image corner.
struct CornerMask {
    int width = 0;
    int height = 0;
};

// keep[row * width + col] = 0 inside the mask, 1 elsewhere.
std::vector<std::uint8_t> corner_mask_keep(int width, int height, const CornerMask& mask);

struct ExtrapolationResult {
    Image prediction;
    // Thresholded (0.5) agreement with the pattern inside the mask; empty
    // when the mask has zero area.
    std::optional<double> masked_accuracy;
    long masked_pixels = 0;
};

// Trains the field on the unmasked pixels only, then measures how well it
// continues the pattern into the masked corner.
ExtrapolationResult extrapolate_experiment(const Image& pattern, const CornerMask& mask,
                                           const ToyField& field, const ToyTrainConfig& cfg);

struct Toy2dConfig {
    EncodingConfig low = SinusoidalEncodingConfig{5, 5.0, true};
    EncodingConfig high = SinusoidalEncodingConfig{10, 5.0, true};
    int depth = 4;
    int width = 128;
    long iterations = 10000;        // image-fitting budget
    long extrap_iterations = 3000;  // per checkerboard run
    int batch_size = 256;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
    int image_size = 64;
    int upsample_factor = 4;
    int checker_cells = 8;
    int mask_divisor = 4;  // corner mask spans size/divisor per side
    int extrap_seeds = 5;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "runs/toy2d";

    void validate() const;
};

void to_json(nlohmann::json& j, const Toy2dConfig& cfg);
void from_json(const nlohmann::json& j, Toy2dConfig& cfg);

// Runs both experiments with the paired low/high encodings, writes the
// comparison panels and report.json under cfg.out_dir, and returns the
// report.
nlohmann::json run_toy2d(const Toy2dConfig& cfg);

}  // namespace halo

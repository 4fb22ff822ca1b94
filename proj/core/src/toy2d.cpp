#include "halo/toy2d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "halo/metrics.hpp"
#include "halo/random.hpp"
#include "halo/threading.hpp"

namespace halo {

namespace {

nlohmann::json finite_or_string(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

Image nearest_upscale(const Image& img, int factor) {
    Image out(img.width * factor, img.height * factor, img.channels);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(x, y, c) = img.at(x / factor, y / factor, c);
            }
        }
    }
    return out;
}

}  // namespace

ToyField::ToyField(EncodingConfig enc, int depth, int width)
    : encoder_(std::move(enc), 2) {
    int cursor = 0;
    MlpConfig mc;
    mc.input_dim = encoder_.output_dim();
    mc.depth = depth;
    mc.width = width;
    mlp_ = Mlp(mc, &cursor);
    head_ = make_linear(width, 1, &cursor);
    param_count_ = cursor;
}

Eigen::VectorXd ToyField::init_params(std::uint64_t seed) const {
    Eigen::VectorXd params(param_count_);
    Rng rng(seed);
    mlp_.init(params, rng);
    init_linear(params, head_, rng);
    return params;
}

Eigen::ArrayXd ToyField::forward(const Eigen::VectorXd& params,
                                 const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 Cache* cache) const {
    const Eigen::MatrixXd enc = encoder_.encode(X);
    const Eigen::MatrixXd H = mlp_.forward(params, enc, cache ? &cache->mlp : nullptr);
    if (cache) cache->encoded = enc;
    return linear_forward(params, head_, H).row(0).transpose().array();
}

void ToyField::backward(const Eigen::VectorXd& params, const Cache& cache,
                        const Eigen::Ref<const Eigen::ArrayXd>& d_out,
                        Eigen::VectorXd& grad) const {
    const Eigen::MatrixXd dY = d_out.matrix().transpose();
    const Eigen::MatrixXd dH =
        linear_backward(params, head_, cache.mlp.hidden.back(), dY, grad);
    mlp_.backward(params, cache.mlp, dH, grad);
}

Eigen::MatrixXd grid_coords(int width, int height) {
    Eigen::MatrixXd C(2, static_cast<Eigen::Index>(width) * height);
    Eigen::Index cursor = 0;
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            C(0, cursor) = 2.0 * (col + 0.5) / width - 1.0;
            C(1, cursor) = 2.0 * (row + 0.5) / height - 1.0;
            ++cursor;
        }
    }
    return C;
}

Eigen::ArrayXd image_targets(const Image& img) {
    const Image lum = to_luminance(img);
    Eigen::ArrayXd t(static_cast<Eigen::Index>(lum.width) * lum.height);
    Eigen::Index cursor = 0;
    for (int row = 0; row < lum.height; ++row) {
        for (int col = 0; col < lum.width; ++col) t[cursor++] = lum.at(col, row, 0);
    }
    return t;
}

Eigen::VectorXd fit_image_field(const Image& img, const ToyField& field,
                                const ToyTrainConfig& cfg,
                                const std::vector<std::uint8_t>& keep) {
    if (cfg.iterations < 0 || cfg.batch_size <= 0) {
        throw std::invalid_argument("fit_image_field: bad training config");
    }
    const Eigen::MatrixXd coords = grid_coords(img.width, img.height);
    const Eigen::ArrayXd targets = image_targets(img);
    if (!keep.empty() && static_cast<Eigen::Index>(keep.size()) != targets.size()) {
        throw std::invalid_argument("fit_image_field: keep mask size mismatch");
    }
    std::vector<Eigen::Index> pool;
    pool.reserve(targets.size());
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
        if (keep.empty() || keep[i]) pool.push_back(i);
    }
    if (pool.empty()) throw std::invalid_argument("fit_image_field: no trainable pixels");

    Eigen::VectorXd params = field.init_params(mix_seed(cfg.seed, 1));
    AdamState adam(field.param_count());
    const int B = cfg.batch_size;
    for (long iter = 0; iter < cfg.iterations; ++iter) {
        Rng rng(mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(iter)));
        Eigen::MatrixXd X(2, B);
        Eigen::ArrayXd tgt(B);
        for (int s = 0; s < B; ++s) {
            const Eigen::Index i = pool[rng.uniform_index(pool.size())];
            X.col(s) = coords.col(i);
            tgt[s] = targets[i];
        }
        ToyField::Cache cache;
        const Eigen::ArrayXd pred = field.forward(params, X, &cache);
        const Eigen::ArrayXd diff = pred - tgt;
        const double loss = diff.square().mean();
        if (!std::isfinite(loss)) {
            throw std::runtime_error("fit_image_field: non-finite loss at iteration " +
                                     std::to_string(iter));
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(field.param_count());
        field.backward(params, cache, (2.0 / B) * diff, grad);
        const double lr = lr_exponential(cfg.lr_start, cfg.lr_end, iter,
                                         std::max<long>(cfg.iterations - 1, 1));
        adam_step(params, grad, adam, lr);
    }
    return params;
}

double toy_train_psnr(const Image& img, const ToyField& field,
                      const Eigen::VectorXd& params) {
    return psnr(render_dense(field, params, img.width, img.height, 1), to_luminance(img));
}

Image render_dense(const ToyField& field, const Eigen::VectorXd& params, int width,
                   int height, int factor) {
    if (factor < 1) throw std::invalid_argument("render_dense: factor must be >= 1");
    const int W = width * factor, H = height * factor;
    Image out(W, H, 1);
    parallel_for_blocks(H, [&](int row) {
        Eigen::MatrixXd X(2, W);
        for (int col = 0; col < W; ++col) {
            X(0, col) = 2.0 * (col + 0.5) / W - 1.0;
            X(1, col) = 2.0 * (row + 0.5) / H - 1.0;
        }
        const Eigen::ArrayXd pred = field.forward(params, X);
        for (int col = 0; col < W; ++col) out.at(col, row, 0) = std::clamp(pred[col], 0.0, 1.0);
    });
    return out;
}

InterpolationResult interpolate_experiment(const Image& img, const ToyField& field,
                                           const Eigen::VectorXd& params, int factor,
                                           double radial_cutoff_fraction) {
    InterpolationResult res;
    res.upsampled = render_dense(field, params, img.width, img.height, factor);
    res.reference =
        bilinear_resize(to_luminance(img), img.width * factor, img.height * factor);
    Image residual(res.upsampled.width, res.upsampled.height, 1);
    for (std::size_t i = 0; i < residual.data.size(); ++i) {
        residual.data[i] = res.upsampled.data[i] - res.reference.data[i];
    }
    res.residual_hf_ratio = hf_energy_ratio(residual, radial_cutoff_fraction);
    return res;
}

Image make_checkerboard(int width, int height, int cells_x, int cells_y) {
    if (cells_x <= 0 || cells_y <= 0 || width % cells_x != 0 || height % cells_y != 0) {
        throw std::invalid_argument("make_checkerboard: cell counts must divide the size");
    }
    const int cw = width / cells_x, ch = height / cells_y;
    Image img(width, height, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            img.at(x, y, 0) = ((x / cw + y / ch) % 2 == 0) ? 0.0 : 1.0;
        }
    }
    return img;
}

Image make_toy_image(int size, std::uint64_t seed) {
    Image img(size, size, 1);
    Rng rng(seed);
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves(8);
    for (auto& w : waves) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double f = rng.uniform(1.0, 12.0) * std::numbers::pi;
        w = {f * std::cos(angle), f * std::sin(angle),
             rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.05, 0.18)};
    }
    const double cx = rng.uniform(-0.5, 0.5), cy = rng.uniform(-0.5, 0.5);
    const double disk_r = rng.uniform(0.25, 0.45);
    const double bar_x = rng.uniform(-0.8, 0.5);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double px = 2.0 * (x + 0.5) / size - 1.0;
            const double py = 2.0 * (y + 0.5) / size - 1.0;
            double v = 0.5;
            for (const auto& w : waves) v += w.amp * std::sin(w.fx * px + w.fy * py + w.phase);
            if ((px - cx) * (px - cx) + (py - cy) * (py - cy) < disk_r * disk_r) v += 0.3;
            if (px >= bar_x && px < bar_x + 0.12) v -= 0.35;
            img.at(x, y, 0) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

std::vector<std::uint8_t> corner_mask_keep(int width, int height, const CornerMask& mask) {
    if (mask.width < 0 || mask.height < 0 || mask.width > width || mask.height > height) {
        throw std::invalid_argument("corner_mask_keep: mask does not fit the image");
    }
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(width) * height, 1);
    for (int y = height - mask.height; y < height; ++y) {
        for (int x = width - mask.width; x < width; ++x) {
            keep[static_cast<std::size_t>(y) * width + x] = 0;
        }
    }
    return keep;
}

ExtrapolationResult extrapolate_experiment(const Image& pattern, const CornerMask& mask,
                                           const ToyField& field, const ToyTrainConfig& cfg) {
    ExtrapolationResult res;
    const auto keep = corner_mask_keep(pattern.width, pattern.height, mask);
    const Eigen::VectorXd params = fit_image_field(pattern, field, cfg, keep);
    res.prediction = render_dense(field, params, pattern.width, pattern.height, 1);
    res.masked_pixels = static_cast<long>(mask.width) * mask.height;
    if (res.masked_pixels == 0) return res;
    const Image gt = to_luminance(pattern);
    long hits = 0;
    for (int y = pattern.height - mask.height; y < pattern.height; ++y) {
        for (int x = pattern.width - mask.width; x < pattern.width; ++x) {
            const bool want = gt.at(x, y, 0) >= 0.5;
            const bool got = res.prediction.at(x, y, 0) >= 0.5;
            if (want == got) ++hits;
        }
    }
    res.masked_accuracy = static_cast<double>(hits) / res.masked_pixels;
    return res;
}

void Toy2dConfig::validate() const {
    if (depth <= 0 || width <= 0) throw std::invalid_argument("toy2d: bad field shape");
    if (iterations < 0 || extrap_iterations < 0 || batch_size <= 0) {
        throw std::invalid_argument("toy2d: bad training budget");
    }
    if (image_size <= 0 || upsample_factor < 1) {
        throw std::invalid_argument("toy2d: bad image geometry");
    }
    if (checker_cells <= 0 || image_size % checker_cells != 0) {
        throw std::invalid_argument("toy2d: checker_cells must divide image_size");
    }
    if (mask_divisor <= 0 || image_size % mask_divisor != 0) {
        throw std::invalid_argument("toy2d: mask_divisor must divide image_size");
    }
    if (extrap_seeds <= 0) throw std::invalid_argument("toy2d: extrap_seeds must be positive");
}

void to_json(nlohmann::json& j, const Toy2dConfig& cfg) {
    j = nlohmann::json{{"low", cfg.low},
                       {"high", cfg.high},
                       {"depth", cfg.depth},
                       {"width", cfg.width},
                       {"iterations", cfg.iterations},
                       {"extrap_iterations", cfg.extrap_iterations},
                       {"batch_size", cfg.batch_size},
                       {"lr_start", cfg.lr_start},
                       {"lr_end", cfg.lr_end},
                       {"image_size", cfg.image_size},
                       {"upsample_factor", cfg.upsample_factor},
                       {"checker_cells", cfg.checker_cells},
                       {"mask_divisor", cfg.mask_divisor},
                       {"extrap_seeds", cfg.extrap_seeds},
                       {"seed", cfg.seed},
                       {"out_dir", cfg.out_dir.string()}};
}

void from_json(const nlohmann::json& j, Toy2dConfig& cfg) {
    if (j.contains("low")) j.at("low").get_to(cfg.low);
    if (j.contains("high")) j.at("high").get_to(cfg.high);
    cfg.depth = j.value("depth", cfg.depth);
    cfg.width = j.value("width", cfg.width);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.extrap_iterations = j.value("extrap_iterations", cfg.extrap_iterations);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr_start = j.value("lr_start", cfg.lr_start);
    cfg.lr_end = j.value("lr_end", cfg.lr_end);
    cfg.image_size = j.value("image_size", cfg.image_size);
    cfg.upsample_factor = j.value("upsample_factor", cfg.upsample_factor);
    cfg.checker_cells = j.value("checker_cells", cfg.checker_cells);
    cfg.mask_divisor = j.value("mask_divisor", cfg.mask_divisor);
    cfg.extrap_seeds = j.value("extrap_seeds", cfg.extrap_seeds);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
}

nlohmann::json run_toy2d(const Toy2dConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    nlohmann::json report;
    report["config"] = cfg;

    const ToyField low_field(cfg.low, cfg.depth, cfg.width);
    const ToyField high_field(cfg.high, cfg.depth, cfg.width);

    // Interpolation: fit a detailed image with both encodings on identical
    // pixel streams, then upsample by dense evaluation.
    const Image img = make_toy_image(cfg.image_size, mix_seed(cfg.seed, 11));
    ToyTrainConfig tc;
    tc.iterations = cfg.iterations;
    tc.batch_size = cfg.batch_size;
    tc.lr_start = cfg.lr_start;
    tc.lr_end = cfg.lr_end;
    tc.seed = mix_seed(cfg.seed, 12);
    const Eigen::VectorXd low_params = fit_image_field(img, low_field, tc);
    const Eigen::VectorXd high_params = fit_image_field(img, high_field, tc);
    const InterpolationResult low_interp =
        interpolate_experiment(img, low_field, low_params, cfg.upsample_factor);
    const InterpolationResult high_interp =
        interpolate_experiment(img, high_field, high_params, cfg.upsample_factor);
    write_png(cfg.out_dir / "interpolation.png",
              hstack({nearest_upscale(to_luminance(img), cfg.upsample_factor),
                      low_interp.reference, low_interp.upsampled, high_interp.upsampled}));
    report["interpolation"] = {
        {"train_psnr_low", finite_or_string(toy_train_psnr(img, low_field, low_params))},
        {"train_psnr_high", finite_or_string(toy_train_psnr(img, high_field, high_params))},
        {"residual_hf_ratio_low", low_interp.residual_hf_ratio},
        {"residual_hf_ratio_high", high_interp.residual_hf_ratio},
        {"factor", cfg.upsample_factor},
        {"iterations", cfg.iterations}};

    // Extrapolation: train on a checkerboard with a hidden corner, repeated
    // over seeds; the two encodings see identical pixel streams per seed.
    const Image pattern =
        make_checkerboard(cfg.image_size, cfg.image_size, cfg.checker_cells, cfg.checker_cells);
    const CornerMask mask{cfg.image_size / cfg.mask_divisor, cfg.image_size / cfg.mask_divisor};
    nlohmann::json runs = nlohmann::json::array();
    int wins = 0;
    Image first_low, first_high;
    for (int s = 0; s < cfg.extrap_seeds; ++s) {
        ToyTrainConfig tb;
        tb.iterations = cfg.extrap_iterations;
        tb.batch_size = cfg.batch_size;
        tb.lr_start = cfg.lr_start;
        tb.lr_end = cfg.lr_end;
        tb.seed = mix_seed(cfg.seed, 13, static_cast<std::uint64_t>(s));
        const ExtrapolationResult low_res =
            extrapolate_experiment(pattern, mask, low_field, tb);
        const ExtrapolationResult high_res =
            extrapolate_experiment(pattern, mask, high_field, tb);
        const double acc_low = low_res.masked_accuracy.value_or(0.0);
        const double acc_high = high_res.masked_accuracy.value_or(0.0);
        if (acc_high > 0.8 && acc_high > acc_low) ++wins;
        runs.push_back(nlohmann::json{
            {"seed_index", s}, {"accuracy_low", acc_low}, {"accuracy_high", acc_high}});
        if (s == 0) {
            first_low = low_res.prediction;
            first_high = high_res.prediction;
        }
    }
    Image masked_input = to_luminance(pattern);
    for (int y = pattern.height - mask.height; y < pattern.height; ++y) {
        for (int x = pattern.width - mask.width; x < pattern.width; ++x) {
            masked_input.at(x, y, 0) = 0.5;
        }
    }
    write_png(cfg.out_dir / "extrapolation.png",
              hstack({masked_input, to_luminance(pattern), first_low, first_high}));
    report["extrapolation"] = {{"mask", {mask.width, mask.height}},
                               {"cells", cfg.checker_cells},
                               {"iterations", cfg.extrap_iterations},
                               {"seeds", cfg.extrap_seeds},
                               {"runs", runs},
                               {"high_wins", wins}};

    std::ofstream out(cfg.out_dir / "report.json");
    if (!out) {
        throw std::runtime_error("cannot write report: " +
                                 (cfg.out_dir / "report.json").string());
    }
    out << report.dump(2) << "\n";
    return report;
}

}  // namespace halo

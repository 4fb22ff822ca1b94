#include "halo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "halo/checkpoint.hpp"
#include "halo/freq_tuning.hpp"
#include "halo/image.hpp"
#include "halo/losses.hpp"
#include "halo/metrics.hpp"
#include "halo/random.hpp"
#include "halo/threading.hpp"

namespace halo {

namespace {

// Target region for fresh empty-pool rays, as a fraction of the bounding
// sphere radius; content is assumed to sit well inside the camera sphere.
constexpr double kContentFraction = 0.35;
// Decorrelates empty-pool per-ray streams from reconstruction ones.
constexpr std::uint64_t kEmptySlotSalt = 1'000'000;
constexpr int kBlockRays = 32;

std::optional<Eigen::Vector3d> background_of(const HaloConfig& cfg) {
    if (cfg.rendering.white_background) return Eigen::Vector3d::Ones();
    return std::nullopt;
}

double elapsed_sec(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::Vector3d random_unit_vector(Rng& rng) {
    Eigen::Vector3d v;
    do {
        v = {rng.normal(), rng.normal(), rng.normal()};
    } while (v.norm() < 1e-9);
    return v.normalized();
}

[[noreturn]] void missing_prereq(const std::filesystem::path& p, const char* stage_needed) {
    throw std::runtime_error("missing prerequisite checkpoint: " + p.string() + " (run stage " +
                             std::string(stage_needed) + " first)");
}

void save_stage_ckpt(const std::filesystem::path& path, const std::string& stage,
                     const HaloConfig& cfg, const TrainState& state, nlohmann::json meta) {
    Checkpoint ck;
    ck.meta = std::move(meta);
    ck.meta["stage"] = stage;
    ck.meta["iteration"] = state.iteration;
    ck.meta["config_hash"] = config_hash_hex(cfg);
    ck.meta["format"] = 1;
    add_train_state(ck, "field", state.params, state.adam);
    save_checkpoint(path, ck);
}

bool try_load_stage(const std::filesystem::path& path, TrainState& state, nlohmann::json* meta) {
    if (!std::filesystem::exists(path)) return false;
    const Checkpoint ck = load_checkpoint(path);
    read_train_state(ck, "field", state.params, state.adam);
    state.iteration = ck.meta.value("iteration", 0L);
    if (meta) *meta = ck.meta;
    return true;
}

// ---------------------------------------------------------------- training

struct PointTrainSetup {
    const PointField* field = nullptr;
    const RayDataset* data = nullptr;
    long iterations = 0;
    int batch_size = 1;
    int samples_per_ray = 1;
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    std::uint64_t seed = 0;
    std::optional<Eigen::Vector3d> background;
    // depth-guided sampling (uniform_fraction = 1 disables it)
    const RayField* guide = nullptr;
    const Eigen::VectorXd* guide_params = nullptr;
    const SceneBounds* bounds = nullptr;
    double window = 0;
    double uniform_fraction = 1.0;
    // empty-space suppression (lambda_empty = 0 disables it)
    const PointField* lo_field = nullptr;
    const Eigen::VectorXd* lo_params = nullptr;
    double lambda_empty = 0;
    double tau = 0.01;
    // instrumentation
    RunLogger* logger = nullptr;
    std::string stage = "point";
    long log_every = 25;
    std::function<void(const TrainState&)> on_snapshot;
    long snapshot_every = 500;
};

TrainState train_point_stage(const PointTrainSetup& S, TrainState state) {
    const PointField& field = *S.field;
    const RayDataset& data = *S.data;
    const long n_rays = data.count();
    if (n_rays == 0) throw std::runtime_error(S.stage + ": empty training set");
    const int P = field.param_count();
    if (state.params.size() != P) throw std::runtime_error(S.stage + ": parameter size mismatch");
    if (state.adam.m.size() != P) state.adam = AdamState(P);

    const int K = S.samples_per_ray;
    const int B = S.batch_size;
    const bool guided = S.guide != nullptr && S.uniform_fraction < 1.0;
    const bool empty_term = S.lambda_empty > 0 && S.lo_field != nullptr;
    const int n_blocks = (B + kBlockRays - 1) / kBlockRays;

    for (long iter = state.iteration; iter < S.iterations; ++iter) {
        Rng iter_rng(mix_seed(S.seed, static_cast<std::uint64_t>(iter)));
        std::vector<long> idx(B);
        for (auto& i : idx) i = static_cast<long>(iter_rng.uniform_index(n_rays));

        Eigen::ArrayXd d_hat;
        if (guided) {
            Eigen::MatrixXd F(6, B);
            for (int s = 0; s < B; ++s) {
                const Ray& ray = data.rays[idx[s]];
                const CanonicalRay cr =
                    canonicalize_ray(ray.origin, ray.direction, S.bounds->radius);
                F.col(s) = canonical_ray_features(cr);
            }
            d_hat = S.guide->forward(*S.guide_params, F, S.bounds->t_near, S.bounds->t_far);
            for (int s = 0; s < B; ++s) {
                const Ray& ray = data.rays[idx[s]];
                d_hat[s] = std::clamp(d_hat[s], ray.t_near, ray.t_far);
            }
        }

        std::vector<Ray> pool;
        if (empty_term) {
            pool.reserve(B);
            for (int s = 0; s < B; ++s) pool.push_back(sample_pool_ray(data, *S.bounds, s, iter_rng));
        }

        std::vector<Eigen::VectorXd> block_grads(n_blocks);
        std::vector<double> block_sq(n_blocks, 0.0);
        parallel_for_blocks(n_blocks, [&](int b) {
            const int first = b * kBlockRays;
            const int last = std::min(B, first + kBlockRays);
            const int m = last - first;
            Eigen::MatrixXd Pm(3, m * K), Dm(3, m * K);
            std::vector<Eigen::ArrayXd> ts(m);
            for (int s = 0; s < m; ++s) {
                const int slot = first + s;
                const Ray& ray = data.rays[idx[slot]];
                Rng srng(mix_seed(S.seed, static_cast<std::uint64_t>(iter),
                                  static_cast<std::uint64_t>(slot)));
                ts[s] = guided ? depth_guided_sample(d_hat[slot], S.window, K, ray.t_near,
                                                     ray.t_far, S.uniform_fraction, srng)
                               : stratified_sample(ray.t_near, ray.t_far, K, srng);
                for (int k = 0; k < K; ++k) {
                    Pm.col(s * K + k) = ray.origin + ts[s][k] * ray.direction;
                    Dm.col(s * K + k) = ray.direction;
                }
            }
            PointField::Cache cache;
            const PointField::Output out = field.forward(state.params, Pm, Dm, &cache);
            Eigen::Matrix3Xd d_rgb = Eigen::Matrix3Xd::Zero(3, m * K);
            Eigen::ArrayXd d_sigma = Eigen::ArrayXd::Zero(m * K);
            double sq = 0;
            for (int s = 0; s < m; ++s) {
                const int slot = first + s;
                const Ray& ray = data.rays[idx[slot]];
                const CompositeResult comp = composite(
                    out.sigma.segment(s * K, K), out.rgb.middleCols(s * K, K), ts[s], ray.t_far,
                    S.background);
                const Eigen::Vector3d diff = comp.rgb - data.colors.col(idx[slot]);
                sq += diff.squaredNorm();
                const CompositeGrad cg = composite_backward(
                    out.sigma.segment(s * K, K), out.rgb.middleCols(s * K, K), ts[s], ray.t_far,
                    S.background, (2.0 / B) * diff, 0.0, 0.0);
                d_sigma.segment(s * K, K) = cg.d_sigma;
                d_rgb.middleCols(s * K, K) = cg.d_color;
            }
            Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
            field.backward(state.params, cache, d_rgb, d_sigma, g);
            block_grads[b] = std::move(g);
            block_sq[b] = sq;
        });
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(P);
        double sq_total = 0;
        for (int b = 0; b < n_blocks; ++b) {
            grad += block_grads[b];
            sq_total += block_sq[b];
        }
        const double l_rec = sq_total / B;

        double l_empty = 0;
        long empty_used = 0;
        if (empty_term) {
            std::vector<Eigen::VectorXd> pool_grads(n_blocks);
            std::vector<double> pool_sum(n_blocks, 0.0);
            std::vector<long> pool_used(n_blocks, 0);
            parallel_for_blocks(n_blocks, [&](int b) {
                const int first = b * kBlockRays;
                const int last = std::min(B, first + kBlockRays);
                const int m = last - first;
                Eigen::MatrixXd Pm(3, m * K), Dm(3, m * K);
                std::vector<Eigen::ArrayXd> ts(m);
                for (int s = 0; s < m; ++s) {
                    const int slot = first + s;
                    const Ray& ray = pool[slot];
                    Rng srng(mix_seed(S.seed, static_cast<std::uint64_t>(iter),
                                      kEmptySlotSalt + static_cast<std::uint64_t>(slot)));
                    ts[s] = stratified_sample(ray.t_near, ray.t_far, K, srng);
                    for (int k = 0; k < K; ++k) {
                        Pm.col(s * K + k) = ray.origin + ts[s][k] * ray.direction;
                        Dm.col(s * K + k) = ray.direction;
                    }
                }
                PointField::Cache cache;
                const PointField::Output hi = field.forward(state.params, Pm, Dm, &cache);
                const PointField::Output lo = S.lo_field->forward(*S.lo_params, Pm, Dm);
                Eigen::Matrix3Xd d_rgb = Eigen::Matrix3Xd::Zero(3, m * K);
                Eigen::ArrayXd d_sigma = Eigen::ArrayXd::Zero(m * K);
                bool any = false;
                for (int s = 0; s < m; ++s) {
                    const int slot = first + s;
                    const Ray& ray = pool[slot];
                    const CompositeResult comp_lo =
                        composite(lo.sigma.segment(s * K, K), lo.rgb.middleCols(s * K, K), ts[s],
                                  ray.t_far, std::nullopt);
                    if (comp_lo.acc >= S.tau) continue;
                    const CompositeResult comp_hi =
                        composite(hi.sigma.segment(s * K, K), hi.rgb.middleCols(s * K, K), ts[s],
                                  ray.t_far, std::nullopt);
                    pool_sum[b] += comp_hi.acc;
                    ++pool_used[b];
                    any = true;
                    const CompositeGrad cg = composite_backward(
                        hi.sigma.segment(s * K, K), hi.rgb.middleCols(s * K, K), ts[s], ray.t_far,
                        std::nullopt, Eigen::Vector3d::Zero(), S.lambda_empty / B, 0.0);
                    d_sigma.segment(s * K, K) = cg.d_sigma;
                    d_rgb.middleCols(s * K, K) = cg.d_color;
                }
                Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
                if (any) field.backward(state.params, cache, d_rgb, d_sigma, g);
                pool_grads[b] = std::move(g);
            });
            for (int b = 0; b < n_blocks; ++b) {
                grad += pool_grads[b];
                l_empty += pool_sum[b];
                empty_used += pool_used[b];
            }
            l_empty /= B;
        }

        const double total = l_rec + S.lambda_empty * l_empty;
        if (!std::isfinite(total)) {
            throw std::runtime_error(S.stage + ": non-finite loss at iteration " +
                                     std::to_string(iter));
        }
        const double lr =
            lr_exponential(S.lr_start, S.lr_end, iter, std::max<long>(S.iterations - 1, 1));
        adam_step(state.params, grad, state.adam, lr);
        state.iteration = iter + 1;

        if (S.logger && *S.logger && (iter % S.log_every == 0 || iter + 1 == S.iterations)) {
            nlohmann::json line{
                {"stage", S.stage},
                {"iteration", iter},
                {"loss", json_number(total)},
                {"loss_rec", json_number(l_rec)},
                {"lr", lr},
                {"batch_psnr", json_number(-10.0 * std::log10(std::max(l_rec / 3.0, 1e-300)))}};
            if (empty_term) {
                line["loss_empty"] = json_number(l_empty);
                line["empty_used"] = empty_used;
            }
            S.logger->write(line);
        }
        if (S.on_snapshot && S.snapshot_every > 0 && state.iteration % S.snapshot_every == 0 &&
            state.iteration < S.iterations) {
            S.on_snapshot(state);
        }
    }
    return state;
}

struct RayTrainSetup {
    const RayField* field = nullptr;
    const Eigen::MatrixXd* features = nullptr;  // input_dim x N
    const Eigen::ArrayXd* targets = nullptr;    // canonical depth (or angle)
    const Eigen::ArrayXd* accs = nullptr;       // gate values per ray
    double out_lo = 0;
    double out_hi = 1;
    long iterations = 0;
    int batch_size = 1;
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    double tau = 0.01;
    std::uint64_t seed = 0;
    RunLogger* logger = nullptr;
    std::string stage = "ray";
    long log_every = 25;
    std::function<void(const TrainState&)> on_snapshot;
    long snapshot_every = 500;
};

TrainState train_ray_stage(const RayTrainSetup& S, TrainState state) {
    const RayField& field = *S.field;
    const long N = S.features->cols();
    if (N == 0) throw std::runtime_error(S.stage + ": empty training set");
    const int P = field.param_count();
    if (state.params.size() != P) throw std::runtime_error(S.stage + ": parameter size mismatch");
    if (state.adam.m.size() != P) state.adam = AdamState(P);
    const int B = S.batch_size;
    const int in_dim = static_cast<int>(S.features->rows());

    for (long iter = state.iteration; iter < S.iterations; ++iter) {
        Rng iter_rng(mix_seed(S.seed, static_cast<std::uint64_t>(iter)));
        Eigen::MatrixXd F(in_dim, B);
        Eigen::ArrayXd tgt(B), acc(B);
        for (int s = 0; s < B; ++s) {
            const long i = static_cast<long>(iter_rng.uniform_index(N));
            F.col(s) = S.features->col(i);
            tgt[s] = (*S.targets)[i];
            acc[s] = (*S.accs)[i];
        }
        RayField::Cache cache;
        const Eigen::ArrayXd pred = field.forward(state.params, F, S.out_lo, S.out_hi, &cache);
        Eigen::ArrayXd d_pred;
        const GatedLoss gl = loss_ray_distill(pred, tgt, acc, S.tau, &d_pred);
        if (!std::isfinite(gl.value)) {
            throw std::runtime_error(S.stage + ": non-finite loss at iteration " +
                                     std::to_string(iter));
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(P);
        field.backward(state.params, cache, d_pred, S.out_lo, S.out_hi, grad);
        const double lr =
            lr_exponential(S.lr_start, S.lr_end, iter, std::max<long>(S.iterations - 1, 1));
        adam_step(state.params, grad, state.adam, lr);
        state.iteration = iter + 1;

        if (S.logger && *S.logger && (iter % S.log_every == 0 || iter + 1 == S.iterations)) {
            nlohmann::json line{{"stage", S.stage},
                                {"iteration", iter},
                                {"loss", json_number(gl.value)},
                                {"lr", lr},
                                {"used", gl.used},
                                {"skipped", gl.skipped}};
            if (gl.used == 0) line["warning"] = "empty distillation gate";
            S.logger->write(line);
        }
        if (S.on_snapshot && S.snapshot_every > 0 && state.iteration % S.snapshot_every == 0 &&
            state.iteration < S.iterations) {
            S.on_snapshot(state);
        }
    }
    return state;
}

void write_view_renders(const std::filesystem::path& dir, const PosedImageSet& views,
                        const std::vector<RenderedView>& renders) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < renders.size(); ++i) {
        const std::string name = i < views.names.size() ? views.names[i] : std::to_string(i);
        write_png(dir / (name + ".png"), renders[i].rgb);
        write_float_map(dir / (name + ".depth.f32"), renders[i].depth, "depth");
    }
}

}  // namespace

nlohmann::json json_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

SceneData load_scene(const HaloConfig& cfg) {
    SceneData out;
    if (cfg.scene.type == "procedural") {
        const std::uint64_t scene_seed = mix_seed(cfg.seed, 100);
        out.train = make_procedural_scene(cfg.scene.procedural, scene_seed);
        if (cfg.scene.holdout_views > 0) {
            ProceduralSceneSpec holdout_spec = cfg.scene.procedural;
            holdout_spec.views = cfg.scene.holdout_views;
            holdout_spec.azimuth_offset_deg += cfg.scene.holdout_azimuth_offset_deg;
            out.holdout = make_procedural_scene(holdout_spec, scene_seed);
        }
    } else if (cfg.scene.type == "blender") {
        out.train = load_blender(cfg.scene.blender_dir, cfg.scene.train_split, cfg.scene.subset);
        out.holdout =
            load_blender(cfg.scene.blender_dir, cfg.scene.eval_split, cfg.scene.eval_subset);
    } else {
        throw std::invalid_argument("load_scene: scene type '" + cfg.scene.type +
                                    "' is not a pinhole scene");
    }
    out.bounds = out.train.bounds;
    if (out.holdout.count() > 0) {
        out.bounds.radius = std::max(out.bounds.radius, out.holdout.bounds.radius);
    }
    return out;
}

namespace {

LightFieldGrid select_grid_subset(const LightFieldGrid& full,
                                  const std::vector<std::pair<int, int>>& wanted) {
    LightFieldGrid out;
    out.lattice = full.lattice;
    out.bounds = full.bounds;
    for (const auto& idx : wanted) {
        bool found = false;
        for (int i = 0; i < full.count(); ++i) {
            if (full.indices[i] == idx) {
                out.images.push_back(full.images[i]);
                out.indices.push_back(full.indices[i]);
                out.uv.push_back(full.uv[i]);
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::runtime_error("light-field grid is missing index (" +
                                     std::to_string(idx.first) + ", " +
                                     std::to_string(idx.second) + ")");
        }
    }
    return out;
}

}  // namespace

LightFieldData load_lightfield_scene(const HaloConfig& cfg) {
    if (cfg.scene.type != "lightfield") {
        throw std::invalid_argument("load_lightfield_scene: scene type is '" + cfg.scene.type +
                                    "'");
    }
    LightFieldData out;
    if (cfg.scene.lightfield_dir.empty()) {
        const LightFieldGrid full =
            make_procedural_lightfield(cfg.scene.lightfield, mix_seed(cfg.seed, 101));
        out.train = select_grid_subset(full, cfg.scene.corner_indices);
        out.eval = select_grid_subset(full, cfg.scene.eval_indices);
        out.bounds = full.bounds;
    } else {
        auto [train, eval] = load_lightfield_grid(cfg.scene.lightfield_dir, cfg.scene.lattice,
                                                  cfg.scene.corner_indices, cfg.scene.eval_indices);
        out.train = std::move(train);
        out.eval = std::move(eval);
        out.bounds = out.train.bounds;
        // Disk grids carry no depth range; derive the angle window from the
        // configured two-plane depths, padded like the procedural path.
        const double th_front = epi_theta_of_depth(cfg.scene.lightfield.z_front);
        const double th_back = epi_theta_of_depth(cfg.scene.lightfield.z_back);
        const double pad = 0.15 * (th_back - th_front);
        out.bounds.theta_near = th_front - pad;
        out.bounds.theta_far = th_back + pad;
        out.train.bounds = out.bounds;
        out.eval.bounds = out.bounds;
    }
    out.bounds.validate_epi();
    return out;
}

RayDataset build_ray_dataset(const PosedImageSet& views, const SceneBounds& bounds) {
    RayDataset out;
    const long total = static_cast<long>(views.count()) * views.width() * views.height();
    out.rays.reserve(total);
    out.colors.resize(3, total);
    long cursor = 0;
    for (int v = 0; v < views.count(); ++v) {
        const Image& img = views.images[v];
        const auto rays = generate_rays(views.poses[v], views.camera_angle_x, img.width,
                                        img.height, bounds.t_near, bounds.t_far);
        for (int row = 0; row < img.height; ++row) {
            for (int col = 0; col < img.width; ++col) {
                out.rays.push_back(rays[static_cast<std::size_t>(row) * img.width + col]);
                out.colors.col(cursor++) = Eigen::Vector3d(
                    img.at(col, row, 0), img.at(col, row, 1), img.at(col, row, 2));
            }
        }
    }
    return out;
}

Ray sample_pool_ray(const RayDataset& data, const SceneBounds& bounds, long slot, Rng& rng) {
    if (slot % 2 == 0 && data.count() > 0) {
        return data.rays[rng.uniform_index(static_cast<std::size_t>(data.count()))];
    }
    Eigen::Vector3d origin = bounds.radius * random_unit_vector(rng);
    const double r = kContentFraction * bounds.radius * std::cbrt(rng.uniform());
    const Eigen::Vector3d target = r * random_unit_vector(rng);
    Ray ray;
    ray.origin = origin;
    ray.direction = (target - origin).normalized();
    ray.t_near = 1e-3;
    ray.t_far = std::max(-2.0 * origin.dot(ray.direction), 0.5);
    return ray;
}

RunLogger::RunLogger(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open log file: " + path.string());
}

void RunLogger::write(const nlohmann::json& line) {
    out_ << line.dump() << "\n";
    out_.flush();
}

void RunPaths::ensure_layout() const {
    std::filesystem::create_directories(checkpoints_dir());
    std::filesystem::create_directories(logs_dir());
    std::filesystem::create_directories(renders_dir());
}

void update_report(const RunPaths& paths, const std::string& key, const nlohmann::json& fragment) {
    nlohmann::json report = nlohmann::json::object();
    if (std::filesystem::exists(paths.report())) {
        std::ifstream in(paths.report());
        try {
            in >> report;
        } catch (const nlohmann::json::exception&) {
            report = nlohmann::json::object();
        }
        if (!report.is_object()) report = nlohmann::json::object();
    }
    report[key] = fragment;
    std::ofstream out(paths.report());
    if (!out) throw std::runtime_error("cannot write report: " + paths.report().string());
    out << report.dump(2) << "\n";
}

void write_manifest(const RunPaths& paths, const HaloConfig& cfg, const std::string& command) {
    paths.ensure_layout();
    save_config(paths.config_copy(), cfg);
    nlohmann::json j{{"config_hash", config_hash_hex(cfg)},
                     {"seed", cfg.seed},
                     {"command", command},
                     {"stage_seeds",
                      {{"lo", stage_seed(cfg, cfg.stage_lo, kSaltLo)},
                       {"ray", stage_seed(cfg, cfg.stage_ray, kSaltRay)},
                       {"hi", stage_seed(cfg, cfg.stage_hi, kSaltHi)},
                       {"joint", stage_seed(cfg, cfg.stage_joint, kSaltJoint)}}},
                     {"worker_threads", worker_thread_count()},
                     {"format", 1}};
    std::ofstream out(paths.manifest());
    if (!out) throw std::runtime_error("cannot write manifest: " + paths.manifest().string());
    out << j.dump(2) << "\n";
}

RenderedView render_field_view(const PointField& field, const Eigen::VectorXd& params,
                               const Eigen::Matrix4d& pose, double camera_angle_x, int width,
                               int height, const SceneBounds& bounds,
                               const RenderOptions& options) {
    const FieldFn fn = make_field_fn(field, params);
    return render_view(fn, pose, camera_angle_x, width, height, bounds.t_near, bounds.t_far,
                       options);
}

ViewMetrics evaluate_field(const PointField& field, const Eigen::VectorXd& params,
                           const PosedImageSet& views, const SceneBounds& bounds,
                           const RenderOptions& options, std::vector<RenderedView>* renders) {
    ViewMetrics vm;
    const FieldFn fn = make_field_fn(field, params);
    for (int v = 0; v < views.count(); ++v) {
        RenderedView rv = render_view(fn, views.poses[v], views.camera_angle_x, views.width(),
                                      views.height(), bounds.t_near, bounds.t_far, options);
        vm.psnr.push_back(psnr(rv.rgb, views.images[v]));
        vm.ssim.push_back(ssim(rv.rgb, views.images[v]));
        if (renders) renders->push_back(std::move(rv));
    }
    if (!vm.psnr.empty()) {
        vm.mean_psnr = 0;
        vm.mean_ssim = 0;
        for (std::size_t i = 0; i < vm.psnr.size(); ++i) {
            vm.mean_psnr += vm.psnr[i];
            vm.mean_ssim += vm.ssim[i];
        }
        vm.mean_psnr /= static_cast<double>(vm.psnr.size());
        vm.mean_ssim /= static_cast<double>(vm.ssim.size());
    }
    return vm;
}

EmptyAccReport measure_empty_acc(const PointField& lo_field, const Eigen::VectorXd& lo_params,
                                 const PointField& hi_field, const Eigen::VectorXd& hi_params,
                                 const RayDataset& data, const SceneBounds& bounds, double tau,
                                 int samples_per_ray, int pool_size, std::uint64_t seed) {
    EmptyAccReport report;
    report.pool_size = pool_size;
    Rng rng(seed);
    const FieldFn lo_fn = make_field_fn(lo_field, lo_params);
    const FieldFn hi_fn = make_field_fn(hi_field, hi_params);
    double total = 0;
    for (int s = 0; s < pool_size; ++s) {
        const Ray ray = sample_pool_ray(data, bounds, s, rng);
        const Eigen::ArrayXd ts = midpoint_sample(ray.t_near, ray.t_far, samples_per_ray);
        if (render_depth(lo_fn, ray, ts).acc >= tau) continue;
        total += render_depth(hi_fn, ray, ts).acc;
        ++report.rays_gated;
    }
    report.mean_acc_hi = report.rays_gated > 0 ? total / report.rays_gated : 0.0;
    return report;
}

DepthDistillEval evaluate_ray_field(const RayField& ray_field, const Eigen::VectorXd& ray_params,
                                    const PointField& lo_field, const Eigen::VectorXd& lo_params,
                                    const PosedImageSet& views, const SceneBounds& bounds,
                                    int samples_per_ray, double tau) {
    DepthDistillEval ev;
    const FieldFn lo_fn = make_field_fn(lo_field, lo_params);
    for (int v = 0; v < views.count(); ++v) {
        const auto rays = generate_rays(views.poses[v], views.camera_angle_x, views.width(),
                                        views.height(), bounds.t_near, bounds.t_far);
        const long n = static_cast<long>(rays.size());
        ev.total += n;
        std::vector<double> err(n, 0.0);
        std::vector<char> gated(n, 0);
        const int kB = 512;
        const int nb = static_cast<int>((n + kB - 1) / kB);
        parallel_for_blocks(nb, [&](int b) {
            for (long i = static_cast<long>(b) * kB; i < std::min<long>(n, (b + 1L) * kB); ++i) {
                const Ray& ray = rays[i];
                const DepthSample ds = render_depth(
                    lo_fn, ray, midpoint_sample(ray.t_near, ray.t_far, samples_per_ray));
                if (ds.acc < tau) continue;
                const CanonicalRay cr =
                    canonicalize_ray(ray.origin, ray.direction, bounds.radius);
                const Eigen::MatrixXd F = canonical_ray_features(cr);
                const Eigen::ArrayXd pred =
                    ray_field.forward(ray_params, F, bounds.t_near, bounds.t_far);
                err[i] = std::abs(pred[0] - ds.depth);
                gated[i] = 1;
            }
        });
        for (long i = 0; i < n; ++i) {
            if (gated[i]) {
                ev.mae += err[i];
                ++ev.used;
            }
        }
    }
    ev.mae = ev.used > 0 ? ev.mae / ev.used : 0.0;
    return ev;
}

Image render_epi_view(const PointField& field, const Eigen::VectorXd& params,
                      const Eigen::Vector2d& uv, int width, int height, const SceneBounds& bounds,
                      int samples_per_theta) {
    bounds.validate_epi();
    const int K = samples_per_theta;
    const Eigen::ArrayXd ts = midpoint_sample(bounds.theta_near, bounds.theta_far, K);
    Image img(width, height, 3);
    const Eigen::Vector3d white = Eigen::Vector3d::Ones();
    parallel_for_blocks(height, [&](int row) {
        Eigen::MatrixXd P(3, width * K), D(2, width * K);
        for (int col = 0; col < width; ++col) {
            const Eigen::Vector2d st = lightfield_st(col, row, width, height);
            for (int k = 0; k < K; ++k) {
                const EpiPoint p = epi_align(uv.x(), uv.y(), st.x(), st.y(), ts[k], 0.0, 0.0);
                P.col(col * K + k) = Eigen::Vector3d(p.s, p.t, p.theta);
                D.col(col * K + k) = uv;
            }
        }
        const PointField::Output out = field.forward(params, P, D);
        for (int col = 0; col < width; ++col) {
            const CompositeResult comp =
                composite(out.sigma.segment(col * K, K), out.rgb.middleCols(col * K, K), ts,
                          bounds.theta_far, white);
            for (int c = 0; c < 3; ++c) img.at(col, row, c) = comp.rgb[c];
        }
    });
    return img;
}

StageOutcome run_stage_lo(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                          bool resume) {
    const auto t0 = std::chrono::steady_clock::now();
    paths.ensure_layout();

    EncodingConfig lo_enc = cfg.stage_lo.encoding;
    bool tuned = false;
    if (std::filesystem::exists(paths.tune_result())) {
        std::ifstream in(paths.tune_result());
        nlohmann::json tj;
        try {
            in >> tj;
            if (tj.contains("chosen")) {
                tj.at("chosen").get_to(lo_enc);
                tuned = true;
            }
        } catch (const nlohmann::json::exception&) {
            // ignore an unreadable tune result; fall back to the configured encoding
        }
    }
    HaloConfig eff = cfg;
    eff.stage_lo.encoding = lo_enc;
    const PointFieldConfig fc = eff.lo_field_config();
    const PointField field(fc);
    const std::uint64_t seed = stage_seed(cfg, cfg.stage_lo, kSaltLo);

    TrainState st;
    if (resume) {
        TrainState loaded;
        if (try_load_stage(paths.checkpoint("lo"), loaded, nullptr) &&
            loaded.params.size() == field.param_count()) {
            st = std::move(loaded);
        }
    }
    if (st.params.size() == 0) {
        st.params = field.init_params(seed);
        st.adam = AdamState(field.param_count());
        st.iteration = 0;
    }
    const long start_iteration = st.iteration;

    const RayDataset data = build_ray_dataset(scene.train, scene.bounds);
    RenderOptions ropts;
    ropts.samples_per_ray = cfg.rendering.eval_samples_per_ray;
    ropts.background = background_of(cfg);
    const double train_psnr_initial =
        evaluate_field(field, st.params, scene.train, scene.bounds, ropts).mean_psnr;

    const nlohmann::json ckpt_meta{{"field_kind", "point"},
                                   {"field_config", fc},
                                   {"bounds", scene.bounds},
                                   {"encoding", lo_enc},
                                   {"seed", seed},
                                   {"tuned", tuned}};
    RunLogger logger(paths.log("lo"), resume);
    PointTrainSetup S;
    S.field = &field;
    S.data = &data;
    S.iterations = cfg.stage_lo.iterations;
    S.batch_size = cfg.stage_lo.batch_size;
    S.samples_per_ray = cfg.stage_lo.samples_per_ray;
    S.lr_start = cfg.stage_lo.lr_start;
    S.lr_end = cfg.stage_lo.lr_end;
    S.seed = seed;
    S.background = background_of(cfg);
    S.logger = &logger;
    S.stage = "lo";
    S.on_snapshot = [&](const TrainState& snap) {
        save_stage_ckpt(paths.checkpoint("lo"), "lo", cfg, snap, ckpt_meta);
    };
    st = train_point_stage(S, std::move(st));
    save_stage_ckpt(paths.checkpoint("lo"), "lo", cfg, st, ckpt_meta);

    const double train_psnr_final =
        evaluate_field(field, st.params, scene.train, scene.bounds, ropts).mean_psnr;
    nlohmann::json fragment{{"stage", "lo"},
                            {"iterations", st.iteration},
                            {"start_iteration", start_iteration},
                            {"seed", seed},
                            {"encoding", lo_enc},
                            {"tuned", tuned},
                            {"train_psnr_initial", json_number(train_psnr_initial)},
                            {"train_psnr_final", json_number(train_psnr_final)}};
    if (scene.holdout.count() > 0) {
        std::vector<RenderedView> renders;
        const ViewMetrics vm =
            evaluate_field(field, st.params, scene.holdout, scene.bounds, ropts, &renders);
        write_view_renders(paths.renders_dir() / "lo", scene.holdout, renders);
        fragment["holdout_psnr"] = json_number(vm.mean_psnr);
        fragment["holdout_ssim"] = json_number(vm.mean_ssim);
    }
    fragment["runtime_sec"] = elapsed_sec(t0);
    update_report(paths, "lo", fragment);
    return {std::move(st), std::move(fragment)};
}

StageOutcome run_stage_ray(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                           bool resume) {
    const auto t0 = std::chrono::steady_clock::now();
    paths.ensure_layout();

    TrainState lo_state;
    nlohmann::json lo_meta;
    if (!try_load_stage(paths.checkpoint("lo"), lo_state, &lo_meta)) {
        missing_prereq(paths.checkpoint("lo"), "lo");
    }
    const PointFieldConfig lo_fc = lo_meta.at("field_config").get<PointFieldConfig>();
    const PointField lo_field(lo_fc);
    if (lo_state.params.size() != lo_field.param_count()) {
        throw std::runtime_error("stage lo checkpoint does not match its stored architecture");
    }

    const RayFieldConfig rc = cfg.ray_field_config();
    const RayField rfield(rc);
    const std::uint64_t seed = stage_seed(cfg, cfg.stage_ray, kSaltRay);
    TrainState st;
    if (resume) {
        TrainState loaded;
        if (try_load_stage(paths.checkpoint("ray"), loaded, nullptr) &&
            loaded.params.size() == rfield.param_count()) {
            st = std::move(loaded);
        }
    }
    if (st.params.size() == 0) {
        st.params = rfield.init_params(seed);
        st.adam = AdamState(rfield.param_count());
        st.iteration = 0;
    }

    // Distillation targets: the frozen low field's rendered depth, on every
    // training pixel plus an equal number of rays cast from random poses on
    // the training orbit so the regression also covers unseen azimuths.
    const RayDataset data = build_ray_dataset(scene.train, scene.bounds);
    const long n_data = data.count();
    std::vector<Ray> rays = data.rays;
    {
        const OrbitPoseSampler orbit = fit_orbit_sampler(scene.train);
        Rng pool_rng(mix_seed(seed, 31));
        const int W = scene.train.width();
        const int H = scene.train.height();
        rays.reserve(2 * n_data);
        for (long i = 0; i < n_data; ++i) {
            const Eigen::Matrix4d pose = orbit.sample(pool_rng);
            const int col = static_cast<int>(pool_rng.uniform_index(W));
            const int row = static_cast<int>(pool_rng.uniform_index(H));
            rays.push_back(pixel_ray(pose, scene.train.camera_angle_x, W, H, col, row,
                                     scene.bounds.t_near, scene.bounds.t_far));
        }
    }
    const long N = static_cast<long>(rays.size());
    Eigen::MatrixXd F(6, N);
    Eigen::ArrayXd targets(N), accs(N);
    const FieldFn lo_fn = make_field_fn(lo_field, lo_state.params);
    const int Kd = cfg.stage_ray.samples_per_ray;
    {
        const int kB = 512;
        const int nb = static_cast<int>((N + kB - 1) / kB);
        parallel_for_blocks(nb, [&](int b) {
            for (long i = static_cast<long>(b) * kB; i < std::min<long>(N, (b + 1L) * kB); ++i) {
                const Ray& ray = rays[i];
                const CanonicalRay cr =
                    canonicalize_ray(ray.origin, ray.direction, scene.bounds.radius);
                F.col(i) = canonical_ray_features(cr);
                const DepthSample ds =
                    render_depth(lo_fn, ray, midpoint_sample(ray.t_near, ray.t_far, Kd));
                targets[i] = ds.depth;
                accs[i] = ds.acc;
            }
        });
    }

    const nlohmann::json ckpt_meta{{"field_kind", "ray"},
                                   {"field_config", rc},
                                   {"bounds", scene.bounds},
                                   {"seed", seed}};
    RunLogger logger(paths.log("ray"), resume);
    RayTrainSetup S;
    S.field = &rfield;
    S.features = &F;
    S.targets = &targets;
    S.accs = &accs;
    S.out_lo = scene.bounds.t_near;
    S.out_hi = scene.bounds.t_far;
    S.iterations = cfg.stage_ray.iterations;
    S.batch_size = cfg.stage_ray.batch_size;
    S.lr_start = cfg.stage_ray.lr_start;
    S.lr_end = cfg.stage_ray.lr_end;
    S.tau = cfg.losses.tau;
    S.seed = seed;
    S.logger = &logger;
    S.stage = "ray";
    S.on_snapshot = [&](const TrainState& snap) {
        save_stage_ckpt(paths.checkpoint("ray"), "ray", cfg, snap, ckpt_meta);
    };
    st = train_ray_stage(S, std::move(st));
    save_stage_ckpt(paths.checkpoint("ray"), "ray", cfg, st, ckpt_meta);

    nlohmann::json fragment{{"stage", "ray"}, {"iterations", st.iteration}, {"seed", seed}};
    if (scene.holdout.count() > 0) {
        const DepthDistillEval ev =
            evaluate_ray_field(rfield, st.params, lo_field, lo_state.params, scene.holdout,
                               scene.bounds, cfg.rendering.eval_samples_per_ray, cfg.losses.tau);
        fragment["holdout_depth_mae"] = json_number(ev.mae);
        fragment["holdout_depth_mae_fraction"] =
            json_number(ev.mae / (scene.bounds.t_far - scene.bounds.t_near));
        fragment["holdout_gated_rays"] = ev.used;
        fragment["holdout_total_rays"] = ev.total;
    }
    fragment["runtime_sec"] = elapsed_sec(t0);
    update_report(paths, "ray", fragment);
    return {std::move(st), std::move(fragment)};
}

StageOutcome run_stage_hi(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                          bool resume) {
    const auto t0 = std::chrono::steady_clock::now();
    paths.ensure_layout();

    const bool guided = cfg.rendering.uniform_fraction < 1.0;
    const bool empty_term = cfg.losses.lambda_empty > 0;

    TrainState lo_state;
    nlohmann::json lo_meta;
    std::optional<PointField> lo_field;
    const bool have_lo = try_load_stage(paths.checkpoint("lo"), lo_state, &lo_meta);
    if (empty_term && !have_lo) missing_prereq(paths.checkpoint("lo"), "lo");
    if (have_lo) {
        lo_field.emplace(lo_meta.at("field_config").get<PointFieldConfig>());
        if (lo_state.params.size() != lo_field->param_count()) {
            throw std::runtime_error("stage lo checkpoint does not match its stored architecture");
        }
    }

    TrainState ray_state;
    nlohmann::json ray_meta;
    std::optional<RayField> ray_field;
    if (guided) {
        if (!try_load_stage(paths.checkpoint("ray"), ray_state, &ray_meta)) {
            missing_prereq(paths.checkpoint("ray"), "ray");
        }
        ray_field.emplace(ray_meta.at("field_config").get<RayFieldConfig>());
        if (ray_state.params.size() != ray_field->param_count()) {
            throw std::runtime_error("stage ray checkpoint does not match its stored architecture");
        }
    }

    const PointFieldConfig hc = cfg.hi_field_config();
    const PointField field(hc);
    const std::uint64_t seed = stage_seed(cfg, cfg.stage_hi, kSaltHi);
    TrainState st;
    if (resume) {
        TrainState loaded;
        if (try_load_stage(paths.checkpoint("hi"), loaded, nullptr) &&
            loaded.params.size() == field.param_count()) {
            st = std::move(loaded);
        }
    }
    if (st.params.size() == 0) {
        st.params = field.init_params(seed);
        st.adam = AdamState(field.param_count());
        st.iteration = 0;
    }

    const RayDataset data = build_ray_dataset(scene.train, scene.bounds);
    const nlohmann::json ckpt_meta{{"field_kind", "point"},
                                   {"field_config", hc},
                                   {"bounds", scene.bounds},
                                   {"encoding", cfg.stage_hi.encoding},
                                   {"seed", seed}};
    RunLogger logger(paths.log("hi"), resume);
    PointTrainSetup S;
    S.field = &field;
    S.data = &data;
    S.iterations = cfg.stage_hi.iterations;
    S.batch_size = cfg.stage_hi.batch_size;
    S.samples_per_ray = cfg.stage_hi.samples_per_ray;
    S.lr_start = cfg.stage_hi.lr_start;
    S.lr_end = cfg.stage_hi.lr_end;
    S.seed = seed;
    S.background = background_of(cfg);
    if (guided) {
        S.guide = &*ray_field;
        S.guide_params = &ray_state.params;
        S.uniform_fraction = cfg.rendering.uniform_fraction;
        S.window = cfg.rendering.depth_window_fraction * (scene.bounds.t_far - scene.bounds.t_near);
    }
    if (empty_term) {
        S.lo_field = &*lo_field;
        S.lo_params = &lo_state.params;
        S.lambda_empty = cfg.losses.lambda_empty;
        S.tau = cfg.losses.tau;
    }
    S.bounds = &scene.bounds;
    S.logger = &logger;
    S.stage = "hi";
    S.on_snapshot = [&](const TrainState& snap) {
        save_stage_ckpt(paths.checkpoint("hi"), "hi", cfg, snap, ckpt_meta);
    };
    st = train_point_stage(S, std::move(st));
    save_stage_ckpt(paths.checkpoint("hi"), "hi", cfg, st, ckpt_meta);

    RenderOptions ropts;
    ropts.samples_per_ray = cfg.rendering.eval_samples_per_ray;
    ropts.background = background_of(cfg);
    nlohmann::json fragment{{"stage", "hi"},
                            {"iterations", st.iteration},
                            {"seed", seed},
                            {"guided", guided},
                            {"lambda_empty", cfg.losses.lambda_empty},
                            {"uniform_fraction", cfg.rendering.uniform_fraction}};
    fragment["train_psnr_final"] = json_number(
        evaluate_field(field, st.params, scene.train, scene.bounds, ropts).mean_psnr);
    if (scene.holdout.count() > 0) {
        std::vector<RenderedView> renders;
        const ViewMetrics vm =
            evaluate_field(field, st.params, scene.holdout, scene.bounds, ropts, &renders);
        write_view_renders(paths.renders_dir() / "hi", scene.holdout, renders);
        fragment["holdout_psnr"] = json_number(vm.mean_psnr);
        fragment["holdout_ssim"] = json_number(vm.mean_ssim);
    }
    if (have_lo) {
        const EmptyAccReport ea = measure_empty_acc(
            *lo_field, lo_state.params, field, st.params, data, scene.bounds, cfg.losses.tau,
            cfg.rendering.eval_samples_per_ray, 2048, mix_seed(cfg.seed, 997));
        fragment["empty_acc"] = {{"mean_acc_hi", json_number(ea.mean_acc_hi)},
                                 {"rays_gated", ea.rays_gated},
                                 {"pool_size", ea.pool_size}};
    }
    fragment["runtime_sec"] = elapsed_sec(t0);
    update_report(paths, "hi", fragment);
    return {std::move(st), std::move(fragment)};
}

StageOutcome run_stage_joint(const HaloConfig& cfg, const LightFieldData& data,
                             const RunPaths& paths, bool resume) {
    const auto t0 = std::chrono::steady_clock::now();
    paths.ensure_layout();
    const SceneBounds& bounds = data.bounds;
    bounds.validate_epi();

    const PointFieldConfig pc = cfg.epi_point_field_config();
    const RayFieldConfig nc = cfg.epi_ray_field_config();
    const PointField point(pc);
    const RayField nelf(nc);
    const std::uint64_t seed = stage_seed(cfg, cfg.stage_joint, kSaltJoint);

    TrainState pt, nt;
    long iteration = 0;
    const auto ckpt_path = paths.checkpoint("joint");
    if (resume && std::filesystem::exists(ckpt_path)) {
        const Checkpoint ck = load_checkpoint(ckpt_path);
        Eigen::VectorXd pp, np;
        AdamState pa, na;
        read_train_state(ck, "point", pp, pa);
        read_train_state(ck, "nelf", np, na);
        if (pp.size() == point.param_count() && np.size() == nelf.param_count()) {
            pt.params = std::move(pp);
            pt.adam = std::move(pa);
            nt.params = std::move(np);
            nt.adam = std::move(na);
            iteration = ck.meta.value("iteration", 0L);
        }
    }
    if (pt.params.size() == 0) {
        pt.params = point.init_params(mix_seed(seed, 1));
        pt.adam = AdamState(point.param_count());
        nt.params = nelf.init_params(mix_seed(seed, 2));
        nt.adam = AdamState(nelf.param_count());
        iteration = 0;
    }

    // Flatten the corner views into (u,v,s,t) features and colors.
    const int W = data.train.width(), H = data.train.height();
    const long N = static_cast<long>(data.train.count()) * W * H;
    Eigen::MatrixXd feats(4, N);
    Eigen::Matrix3Xd colors(3, N);
    {
        long cursor = 0;
        for (int v = 0; v < data.train.count(); ++v) {
            const Image& img = data.train.images[v];
            const Eigen::Vector2d uv = data.train.uv[v];
            for (int row = 0; row < H; ++row) {
                for (int col = 0; col < W; ++col) {
                    const Eigen::Vector2d st_px = lightfield_st(col, row, W, H);
                    feats.col(cursor) << uv.x(), uv.y(), st_px.x(), st_px.y();
                    colors.col(cursor) = Eigen::Vector3d(img.at(col, row, 0), img.at(col, row, 1),
                                                         img.at(col, row, 2));
                    ++cursor;
                }
            }
        }
    }

    const int B = cfg.stage_joint.batch_size;
    const int K = cfg.stage_joint.samples_per_ray;
    const long iterations = cfg.stage_joint.iterations;
    const int n_blocks = (B + kBlockRays - 1) / kBlockRays;
    const double theta_n = bounds.theta_near, theta_f = bounds.theta_far;
    const std::optional<Eigen::Vector3d> bg = background_of(cfg);
    const int Pp = point.param_count();
    const int Pn = nelf.param_count();

    const auto save_joint = [&](long it) {
        Checkpoint ck;
        ck.meta = nlohmann::json{{"stage", "joint"},         {"iteration", it},
                                 {"config_hash", config_hash_hex(cfg)},
                                 {"format", 1},              {"field_kind", "joint"},
                                 {"point_config", pc},       {"nelf_config", nc},
                                 {"bounds", bounds},         {"seed", seed}};
        add_train_state(ck, "point", pt.params, pt.adam);
        add_train_state(ck, "nelf", nt.params, nt.adam);
        save_checkpoint(ckpt_path, ck);
    };

    RunLogger logger(paths.log("joint"), resume);
    for (long iter = iteration; iter < iterations; ++iter) {
        Rng iter_rng(mix_seed(seed, static_cast<std::uint64_t>(iter)));
        std::vector<long> idx(B);
        for (auto& i : idx) i = static_cast<long>(iter_rng.uniform_index(N));

        Eigen::MatrixXd Fb(4, B);
        for (int s = 0; s < B; ++s) Fb.col(s) = feats.col(idx[s]);
        RayField::Cache ncache;
        const Eigen::ArrayXd theta_pred = nelf.forward(nt.params, Fb, theta_n, theta_f, &ncache);
        const double alpha = alpha_at(cfg.joint_schedule, iter);

        std::vector<Eigen::VectorXd> block_grads(n_blocks);
        std::vector<double> block_sq(n_blocks, 0.0);
        Eigen::ArrayXd theta_target(B), acc_pt(B);
        parallel_for_blocks(n_blocks, [&](int b) {
            const int first = b * kBlockRays;
            const int last = std::min(B, first + kBlockRays);
            const int m = last - first;
            Eigen::MatrixXd Pm(3, m * K), Dm(2, m * K);
            std::vector<Eigen::ArrayXd> ts(m);
            for (int s = 0; s < m; ++s) {
                const int slot = first + s;
                Rng srng(mix_seed(seed, static_cast<std::uint64_t>(iter),
                                  static_cast<std::uint64_t>(slot)));
                ts[s] = epi_theta_sample(theta_pred[slot], alpha, theta_n, theta_f, K, srng);
                const Eigen::Vector4d f = Fb.col(slot);
                for (int k = 0; k < K; ++k) {
                    const EpiPoint p = epi_align(f[0], f[1], f[2], f[3], ts[s][k], 0.0, 0.0);
                    Pm.col(s * K + k) = Eigen::Vector3d(p.s, p.t, p.theta);
                    Dm.col(s * K + k) = f.head<2>();
                }
            }
            PointField::Cache cache;
            const PointField::Output out = point.forward(pt.params, Pm, Dm, &cache);
            Eigen::Matrix3Xd d_rgb = Eigen::Matrix3Xd::Zero(3, m * K);
            Eigen::ArrayXd d_sigma = Eigen::ArrayXd::Zero(m * K);
            double sq = 0;
            for (int s = 0; s < m; ++s) {
                const int slot = first + s;
                const CompositeResult comp =
                    composite(out.sigma.segment(s * K, K), out.rgb.middleCols(s * K, K), ts[s],
                              theta_f, bg);
                const Eigen::Vector3d diff = comp.rgb - colors.col(idx[slot]);
                sq += diff.squaredNorm();
                theta_target[slot] = comp.depth;
                acc_pt[slot] = comp.acc;
                const CompositeGrad cg = composite_backward(
                    out.sigma.segment(s * K, K), out.rgb.middleCols(s * K, K), ts[s], theta_f, bg,
                    (2.0 / B) * diff, 0.0, 0.0);
                d_sigma.segment(s * K, K) = cg.d_sigma;
                d_rgb.middleCols(s * K, K) = cg.d_color;
            }
            Eigen::VectorXd g = Eigen::VectorXd::Zero(Pp);
            point.backward(pt.params, cache, d_rgb, d_sigma, g);
            block_grads[b] = std::move(g);
            block_sq[b] = sq;
        });
        Eigen::VectorXd p_grad = Eigen::VectorXd::Zero(Pp);
        double sq_total = 0;
        for (int b = 0; b < n_blocks; ++b) {
            p_grad += block_grads[b];
            sq_total += block_sq[b];
        }
        const double l_rec = sq_total / B;

        // Consistency: pull the angle field toward the radiance field's
        // composited angle (detached), gated by occupancy.
        Eigen::ArrayXd d_theta;
        const GatedLoss gc =
            loss_ray_distill(theta_pred, theta_target, acc_pt, cfg.losses.tau, &d_theta);
        Eigen::VectorXd n_grad = Eigen::VectorXd::Zero(Pn);
        nelf.backward(nt.params, ncache, cfg.losses.lambda_consist * d_theta, theta_n, theta_f,
                      n_grad);

        const double total = l_rec + cfg.losses.lambda_consist * gc.value;
        if (!std::isfinite(total)) {
            throw std::runtime_error("joint: non-finite loss at iteration " + std::to_string(iter));
        }
        const double lr = lr_exponential(cfg.stage_joint.lr_start, cfg.stage_joint.lr_end, iter,
                                         std::max<long>(iterations - 1, 1));
        adam_step(pt.params, p_grad, pt.adam, lr);
        adam_step(nt.params, n_grad, nt.adam, lr);
        iteration = iter + 1;

        if (iter % 25 == 0 || iter + 1 == iterations) {
            logger.write(nlohmann::json{{"stage", "joint"},
                                        {"iteration", iter},
                                        {"loss_rec", json_number(l_rec)},
                                        {"loss_consist", json_number(gc.value)},
                                        {"alpha", alpha},
                                        {"lr", lr},
                                        {"consist_used", gc.used}});
        }
        if (iteration % 500 == 0 && iteration < iterations) save_joint(iteration);
    }
    save_joint(iteration);

    nlohmann::json fragment{{"stage", "joint"},
                            {"iterations", iteration},
                            {"seed", seed},
                            {"alpha_end", cfg.joint_schedule.alpha_end},
                            {"decay_iterations", cfg.joint_schedule.decay_iterations}};
    if (data.eval.count() > 0) {
        std::filesystem::create_directories(paths.renders_dir() / "joint");
        nlohmann::json per_view = nlohmann::json::array();
        double mean = 0;
        for (int v = 0; v < data.eval.count(); ++v) {
            const Image img = render_epi_view(point, pt.params, data.eval.uv[v], W, H, bounds,
                                              cfg.rendering.eval_samples_per_ray);
            const double p = psnr(img, data.eval.images[v]);
            mean += p;
            const std::string name = std::to_string(data.eval.indices[v].first) + "_" +
                                     std::to_string(data.eval.indices[v].second);
            write_png(paths.renders_dir() / "joint" / ("view_" + name + ".png"), img);
            per_view.push_back(nlohmann::json{{"index", data.eval.indices[v]},
                                              {"psnr", json_number(p)}});
        }
        fragment["eval_psnr"] = per_view;
        fragment["eval_mean_psnr"] = json_number(mean / data.eval.count());
    }
    fragment["runtime_sec"] = elapsed_sec(t0);
    update_report(paths, "joint", fragment);
    TrainState out_state = std::move(pt);
    out_state.iteration = iteration;
    return {std::move(out_state), std::move(fragment)};
}

nlohmann::json run_tune(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths) {
    const auto t0 = std::chrono::steady_clock::now();
    paths.ensure_layout();
    const RayDataset data = build_ray_dataset(scene.train, scene.bounds);
    const OrbitPoseSampler sampler = fit_orbit_sampler(scene.train);
    SpectralCriterionConfig crit = cfg.tune.criterion;
    if (crit.seed == 0) crit.seed = mix_seed(cfg.seed, kSaltTune, 7);
    const std::uint64_t tune_seed =
        cfg.tune.seed != 0 ? cfg.tune.seed : mix_seed(cfg.seed, kSaltTune);
    const int R = crit.render_resolution;
    const double angle = scene.train.camera_angle_x;
    const SceneBounds bounds = scene.bounds;

    const TrainShortFn train_short = [&](const EncodingConfig& enc) -> PoseRenderFn {
        HaloConfig eff = cfg;
        eff.stage_lo.encoding = enc;
        const auto field = std::make_shared<PointField>(eff.lo_field_config());
        TrainState st;
        st.params = field->init_params(tune_seed);
        st.adam = AdamState(field->param_count());
        PointTrainSetup S;
        S.field = field.get();
        S.data = &data;
        S.iterations = cfg.tune.iterations;
        S.batch_size = cfg.tune.batch_size;
        S.samples_per_ray = cfg.tune.samples_per_ray;
        S.lr_start = cfg.tune.lr_start;
        S.lr_end = cfg.tune.lr_end;
        S.seed = tune_seed;
        S.background = background_of(cfg);
        S.stage = "tune";
        st = train_point_stage(S, std::move(st));
        const auto params = std::make_shared<Eigen::VectorXd>(std::move(st.params));
        RenderOptions ropts;
        ropts.samples_per_ray = cfg.tune.samples_per_ray;
        ropts.background = background_of(cfg);
        return [field, params, bounds, angle, R, ropts](const Eigen::Matrix4d& pose) {
            return render_field_view(*field, *params, pose, angle, R, R, bounds, ropts).rgb;
        };
    };

    const TuneResult result = tune_frequency(train_short, cfg.tune.candidates, sampler, crit);
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : result.reports) {
        reports.push_back(nlohmann::json{
            {"encoding", r.encoding}, {"sigma", json_number(r.sigma)}, {"pass", r.pass}});
    }
    nlohmann::json out{{"chosen", result.chosen},
                       {"fell_through", result.fell_through},
                       {"criterion", crit},
                       {"reports", reports},
                       {"runtime_sec", elapsed_sec(t0)}};
    if (result.fell_through) {
        out["warning"] =
            "no candidate passed the spectral threshold; lowest-frequency candidate selected";
    }
    std::ofstream f(paths.tune_result());
    if (!f) throw std::runtime_error("cannot write tune result: " + paths.tune_result().string());
    f << out.dump(2) << "\n";
    update_report(paths, "tune", out);
    return out;
}

}  // namespace halo

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "halo/checkpoint.hpp"
#include "halo/config.hpp"
#include "halo/fields.hpp"
#include "halo/image.hpp"
#include "halo/metrics.hpp"
#include "halo/pipeline.hpp"
#include "halo/toy2d.hpp"

namespace {

using namespace halo;

HaloConfig load_run_config(const std::string& path,
                           const std::optional<std::uint64_t>& seed,
                           const std::optional<std::string>& out_dir) {
    HaloConfig cfg = load_config(path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    cfg.validate();
    return cfg;
}

Eigen::Matrix4d parse_pose(const nlohmann::json& m) {
    if (!m.is_array() || m.size() != 4) {
        throw std::runtime_error("poses: transform_matrix must be a 4x4 array");
    }
    Eigen::Matrix4d P;
    for (int r = 0; r < 4; ++r) {
        const auto& row = m.at(r);
        if (!row.is_array() || row.size() != 4) {
            throw std::runtime_error("poses: transform_matrix must be a 4x4 array");
        }
        for (int c = 0; c < 4; ++c) P(r, c) = row.at(c).get<double>();
    }
    return P;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return j;
}

int cmd_tune(const HaloConfig& cfg, const std::string& command) {
    const RunPaths paths{cfg.out_dir};
    paths.ensure_layout();
    write_manifest(paths, cfg, command);
    const SceneData scene = load_scene(cfg);
    const nlohmann::json out = run_tune(cfg, scene, paths);
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_train(const HaloConfig& cfg, const std::string& stage, bool resume,
              const std::string& command) {
    const RunPaths paths{cfg.out_dir};
    paths.ensure_layout();
    write_manifest(paths, cfg, command);
    std::vector<nlohmann::json> outs;
    if (cfg.scene.type == "lightfield") {
        if (stage != "joint" && stage != "all") {
            throw std::runtime_error("stage '" + stage +
                                     "' needs a pinhole scene; light-field configs train with "
                                     "--stage joint");
        }
        const LightFieldData data = load_lightfield_scene(cfg);
        outs.push_back(run_stage_joint(cfg, data, paths, resume).report);
    } else {
        if (stage == "joint") {
            throw std::runtime_error("stage joint needs a light-field scene config");
        }
        const SceneData scene = load_scene(cfg);
        if (stage == "lo" || stage == "all") {
            outs.push_back(run_stage_lo(cfg, scene, paths, resume).report);
        }
        if (stage == "ray" || stage == "all") {
            outs.push_back(run_stage_ray(cfg, scene, paths, resume).report);
        }
        if (stage == "hi" || stage == "all") {
            outs.push_back(run_stage_hi(cfg, scene, paths, resume).report);
        }
    }
    for (const auto& o : outs) std::cout << o.dump() << "\n";
    return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& poses_path,
               const std::string& outdir) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const nlohmann::json pj = read_json_file(poses_path);
    const std::filesystem::path out(outdir);
    std::filesystem::create_directories(out);
    const std::string kind = ck.meta.value("field_kind", std::string("point"));
    int rendered = 0;

    if (kind == "joint") {
        const auto pc = ck.meta.at("point_config").get<PointFieldConfig>();
        const auto bounds = ck.meta.at("bounds").get<SceneBounds>();
        const PointField field(pc);
        Eigen::VectorXd params;
        AdamState adam;
        read_train_state(ck, "point", params, adam);
        const int W = pj.value("width", 64), H = pj.value("height", 64);
        const int K = pj.value("samples_per_ray", 64);
        for (const auto& v : pj.at("views")) {
            const std::string name = v.value("name", "view_" + std::to_string(rendered));
            const Eigen::Vector2d uv(v.at("uv").at(0).get<double>(),
                                     v.at("uv").at(1).get<double>());
            write_png(out / (name + ".png"),
                      render_epi_view(field, params, uv, W, H, bounds, K));
            ++rendered;
        }
    } else if (kind == "point") {
        const auto fc = ck.meta.at("field_config").get<PointFieldConfig>();
        const auto bounds = ck.meta.at("bounds").get<SceneBounds>();
        const PointField field(fc);
        Eigen::VectorXd params;
        AdamState adam;
        read_train_state(ck, "field", params, adam);
        const int W = pj.value("width", 100), H = pj.value("height", 100);
        const double angle = pj.at("camera_angle_x").get<double>();
        RenderOptions ropts;
        ropts.samples_per_ray = pj.value("samples_per_ray", 64);
        if (!pj.value("white_background", true)) ropts.background.reset();
        for (const auto& frame : pj.at("frames")) {
            const std::string name = frame.value("name", "view_" + std::to_string(rendered));
            const Eigen::Matrix4d pose = parse_pose(frame.at("transform_matrix"));
            const RenderedView rv =
                render_field_view(field, params, pose, angle, W, H, bounds, ropts);
            write_png(out / (name + ".png"), rv.rgb);
            write_float_map(out / (name + ".depth.f32"), rv.depth, "depth");
            write_float_map(out / (name + ".acc.f32"), rv.acc, "acc");
            ++rendered;
        }
    } else {
        throw std::runtime_error("render: checkpoint holds a '" + kind +
                                 "' field, which has no raster output");
    }
    std::cout << nlohmann::json{{"rendered", rendered}, {"out_dir", out.string()}}.dump()
              << "\n";
    return 0;
}

int cmd_eval(const std::string& renders_dir, const std::string& gt_dir,
             const std::optional<std::string>& out_path) {
    std::vector<std::filesystem::path> gt_files;
    for (const auto& e : std::filesystem::directory_iterator(gt_dir)) {
        if (e.path().extension() == ".png") gt_files.push_back(e.path());
    }
    std::sort(gt_files.begin(), gt_files.end());
    if (gt_files.empty()) {
        throw std::runtime_error("eval: no .png ground-truth images in " + gt_dir);
    }
    nlohmann::json per = nlohmann::json::array();
    double mean_psnr = 0, mean_ssim = 0;
    for (const auto& gt_path : gt_files) {
        const std::filesystem::path render_path =
            std::filesystem::path(renders_dir) / gt_path.filename();
        if (!std::filesystem::exists(render_path)) {
            throw std::runtime_error("eval: missing render " + render_path.string());
        }
        Image a = composite_over_white(read_png(render_path));
        Image b = composite_over_white(read_png(gt_path));
        if (a.channels != b.channels) {
            a = to_luminance(a);
            b = to_luminance(b);
        }
        const double p = psnr(a, b);
        const double s = ssim(a, b);
        mean_psnr += p;
        mean_ssim += s;
        per.push_back(nlohmann::json{{"name", gt_path.filename().string()},
                                     {"psnr", json_number(p)},
                                     {"ssim", s}});
    }
    const auto n = static_cast<double>(gt_files.size());
    const nlohmann::json out{{"count", gt_files.size()},
                             {"mean_psnr", json_number(mean_psnr / n)},
                             {"mean_ssim", mean_ssim / n},
                             {"per_image", per}};
    std::cout << out.dump() << "\n";
    if (out_path) {
        std::ofstream f(*out_path);
        if (!f) throw std::runtime_error("cannot write " + *out_path);
        f << out.dump(2) << "\n";
    }
    return 0;
}

int cmd_toy2d(const std::optional<std::string>& config_path,
              const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out_dir) {
    Toy2dConfig cfg;
    if (config_path) read_json_file(*config_path).get_to(cfg);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    const nlohmann::json report = run_toy2d(cfg);
    std::cout << nlohmann::json{{"out_dir", cfg.out_dir.string()},
                                {"interpolation", report.at("interpolation")},
                                {"extrapolation", report.at("extrapolation")}}
                     .dump()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-split neural field pipeline"};
    app.require_subcommand(1);

    std::string config_path, stage = "all";
    std::string ckpt_path, poses_path, render_out;
    std::string renders_dir, gt_dir;
    std::optional<std::string> out_dir, eval_out, toy_config;
    std::optional<std::uint64_t> seed;
    bool resume = false;

    CLI::App* tune = app.add_subcommand(
        "tune-freq", "pick the low-stage encoding with the spectral criterion");
    tune->add_option("--config", config_path, "run config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    tune->add_option("--seed", seed, "override the config seed");
    tune->add_option("--out", out_dir, "override the config output directory");

    CLI::App* train = app.add_subcommand("train", "run pipeline stages");
    train->add_option("--config", config_path, "run config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--stage", stage, "lo|ray|hi|joint|all")
        ->check(CLI::IsMember({"lo", "ray", "hi", "joint", "all"}));
    train->add_flag("--resume", resume, "continue from existing checkpoints");
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", out_dir, "override the config output directory");

    CLI::App* render = app.add_subcommand("render", "render a checkpoint at given poses");
    render->add_option("checkpoint", ckpt_path, "stage checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    render->add_option("poses", poses_path, "pose list JSON")
        ->required()
        ->check(CLI::ExistingFile);
    render->add_option("outdir", render_out, "output directory")->required();

    CLI::App* eval =
        app.add_subcommand("eval", "PSNR/SSIM between matching render and ground-truth PNGs");
    eval->add_option("renders", renders_dir, "rendered images directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval->add_option("ground_truth", gt_dir, "ground-truth images directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval->add_option("--out", eval_out, "also write the metrics JSON here");

    CLI::App* toy = app.add_subcommand("toy2d", "2D frequency toy experiments");
    toy->add_option("--config", toy_config, "toy config JSON")->check(CLI::ExistingFile);
    toy->add_option("--seed", seed, "override the config seed");
    toy->add_option("--out", out_dir, "override the config output directory");

    CLI11_PARSE(app, argc, argv);

    std::string command;
    for (int i = 1; i < argc; ++i) {
        if (i > 1) command += ' ';
        command += argv[i];
    }

    try {
        if (tune->parsed()) {
            return cmd_tune(load_run_config(config_path, seed, out_dir), command);
        }
        if (train->parsed()) {
            return cmd_train(load_run_config(config_path, seed, out_dir), stage, resume, command);
        }
        if (render->parsed()) return cmd_render(ckpt_path, poses_path, render_out);
        if (eval->parsed()) return cmd_eval(renders_dir, gt_dir, eval_out);
        if (toy->parsed()) return cmd_toy2d(toy_config, seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

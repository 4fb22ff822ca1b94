#include "halo/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "halo/threading.hpp"

namespace halo {

namespace {

constexpr double kDepthEps = 1e-10;

void make_strictly_increasing(Eigen::ArrayXd& ts) {
    for (Eigen::Index i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1]))
            ts[i] = std::nextafter(ts[i - 1], std::numeric_limits<double>::infinity());
}

void check_rigid(const Eigen::Matrix4d& m) {
    const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("camera pose rotation is not orthonormal");
    if (m.row(3).head<3>().cwiseAbs().maxCoeff() > 1e-9 || std::abs(m(3, 3) - 1) > 1e-9)
        throw std::invalid_argument("camera pose is not an affine rigid transform");
}

}  // namespace

void Ray::validate() const {
    if (std::abs(direction.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("ray direction must be unit length");
    if (!(t_near < t_far)) throw std::invalid_argument("ray requires t_near < t_far");
}

double focal_from_angle(int width, double camera_angle_x) {
    if (width < 1) throw std::invalid_argument("image width must be >= 1");
    if (!(camera_angle_x > 0) || !(camera_angle_x < 3.141592653589793))
        throw std::invalid_argument("camera_angle_x must lie in (0, pi)");
    return 0.5 * width / std::tan(0.5 * camera_angle_x);
}

Ray pixel_ray(const Eigen::Matrix4d& camera_to_world, double camera_angle_x,
              int width, int height, int col, int row, double t_near, double t_far) {
    check_rigid(camera_to_world);
    const double f = focal_from_angle(width, camera_angle_x);
    Eigen::Vector3d dir_cam((col + 0.5 - 0.5 * width) / f,
                            -(row + 0.5 - 0.5 * height) / f, -1.0);
    Ray ray;
    ray.origin = camera_to_world.topRightCorner<3, 1>();
    ray.direction = (camera_to_world.topLeftCorner<3, 3>() * dir_cam).normalized();
    ray.t_near = t_near;
    ray.t_far = t_far;
    ray.validate();
    return ray;
}

std::vector<Ray> generate_rays(const Eigen::Matrix4d& camera_to_world,
                               double camera_angle_x, int width, int height,
                               double t_near, double t_far) {
    check_rigid(camera_to_world);
    const double f = focal_from_angle(width, camera_angle_x);
    const Eigen::Matrix3d rot = camera_to_world.topLeftCorner<3, 3>();
    const Eigen::Vector3d origin = camera_to_world.topRightCorner<3, 1>();
    if (!(t_near < t_far)) throw std::invalid_argument("ray requires t_near < t_far");

    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(width) * height);
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            Eigen::Vector3d dir_cam((col + 0.5 - 0.5 * width) / f,
                                    -(row + 0.5 - 0.5 * height) / f, -1.0);
            Ray ray;
            ray.origin = origin;
            ray.direction = (rot * dir_cam).normalized();
            ray.t_near = t_near;
            ray.t_far = t_far;
            rays.push_back(ray);
        }
    }
    return rays;
}

Eigen::ArrayXd stratified_sample(double t_near, double t_far, int count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("sample count must be >= 1");
    if (!(t_near < t_far)) throw std::invalid_argument("sampling requires t_near < t_far");
    const double w = (t_far - t_near) / count;
    Eigen::ArrayXd ts(count);
    for (int i = 0; i < count; ++i) ts[i] = t_near + (i + rng.uniform()) * w;
    make_strictly_increasing(ts);
    return ts;
}

Eigen::ArrayXd midpoint_sample(double t_near, double t_far, int count) {
    if (count < 1) throw std::invalid_argument("sample count must be >= 1");
    if (!(t_near < t_far)) throw std::invalid_argument("sampling requires t_near < t_far");
    const double w = (t_far - t_near) / count;
    Eigen::ArrayXd ts(count);
    for (int i = 0; i < count; ++i) ts[i] = t_near + (i + 0.5) * w;
    return ts;
}

Eigen::ArrayXd depth_guided_sample(double d_hat, double window, int count,
                                   double t_near, double t_far,
                                   double uniform_fraction, Rng& rng) {
    if (!(window > 0)) throw std::invalid_argument("depth window must be > 0");
    if (count < 1) throw std::invalid_argument("sample count must be >= 1");
    if (!(uniform_fraction >= 0) || !(uniform_fraction <= 1))
        throw std::invalid_argument("uniform_fraction must lie in [0,1]");
    if (!(d_hat >= t_near) || !(d_hat <= t_far))
        throw std::invalid_argument("depth estimate outside the ray range");

    const int n_focus = static_cast<int>(std::ceil((1.0 - uniform_fraction) * count));
    const int n_uniform = count - n_focus;
    const double lo = std::max(t_near, d_hat - 0.5 * window);
    const double hi = std::min(t_far, d_hat + 0.5 * window);

    Eigen::ArrayXd ts(count);
    if (n_focus > 0) ts.head(n_focus) = stratified_sample(lo, hi, n_focus, rng);
    if (n_uniform > 0)
        ts.tail(n_uniform) = stratified_sample(t_near, t_far, n_uniform, rng);
    std::sort(ts.data(), ts.data() + ts.size());
    make_strictly_increasing(ts);
    return ts;
}

Eigen::ArrayXd epi_theta_sample(double theta_ray, double alpha, double theta_near,
                                double theta_far, int count, Rng& rng) {
    if (!(theta_near < theta_far))
        throw std::invalid_argument("sampling requires theta_near < theta_far");
    if (!(alpha >= 0) || !(alpha <= 1))
        throw std::invalid_argument("alpha must lie in [0,1]");
    if (count < 1) throw std::invalid_argument("sample count must be >= 1");

    const double half = alpha * (theta_far - theta_near);
    Eigen::ArrayXd ts;
    if (half > 0) {
        ts = stratified_sample(theta_ray - half, theta_ray + half, count, rng);
    } else {
        ts = Eigen::ArrayXd::Constant(count, theta_ray);
    }
    ts = ts.max(theta_near).min(theta_far);
    make_strictly_increasing(ts);
    return ts;
}

CompositeResult composite(const Eigen::Ref<const Eigen::ArrayXd>& sigmas,
                          const Eigen::Ref<const Eigen::Matrix3Xd>& colors,
                          const Eigen::Ref<const Eigen::ArrayXd>& ts, double t_far,
                          const std::optional<Eigen::Vector3d>& background) {
    const Eigen::Index k = ts.size();
    if (k < 1) throw std::invalid_argument("composite needs at least one sample");
    if (sigmas.size() != k || colors.cols() != k)
        throw std::invalid_argument("composite input lengths disagree");
    if ((sigmas < 0).any())
        throw std::invalid_argument("composite densities must be nonnegative");
    for (Eigen::Index i = 1; i < k; ++i)
        if (!(ts[i] > ts[i - 1]))
            throw std::invalid_argument("composite sample positions must be strictly increasing");

    CompositeResult res;
    res.weights.resize(k);
    res.rgb.setZero();
    double transmittance = 1.0;
    double depth_sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double delta =
            i + 1 < k ? ts[i + 1] - ts[i] : std::max(t_far - ts[i], 0.0);
        const double decay = std::exp(-sigmas[i] * delta);
        const double w = transmittance * (1.0 - decay);
        res.weights[i] = w;
        res.rgb += w * colors.col(i);
        depth_sum += w * ts[i];
        transmittance *= decay;
    }
    res.acc = res.weights.sum();
    res.depth = depth_sum / std::max(res.acc, kDepthEps);
    res.transmittance_tail = transmittance;
    if (background) res.rgb += (1.0 - res.acc) * *background;
    return res;
}

CompositeGrad composite_backward(const Eigen::Ref<const Eigen::ArrayXd>& sigmas,
                                 const Eigen::Ref<const Eigen::Matrix3Xd>& colors,
                                 const Eigen::Ref<const Eigen::ArrayXd>& ts,
                                 double t_far,
                                 const std::optional<Eigen::Vector3d>& background,
                                 const Eigen::Vector3d& d_rgb, double d_acc,
                                 double d_depth) {
    const Eigen::Index k = ts.size();
    Eigen::ArrayXd deltas(k), weights(k), trans(k + 1);
    trans[0] = 1.0;
    double acc = 0.0, depth_sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        deltas[i] = i + 1 < k ? ts[i + 1] - ts[i] : std::max(t_far - ts[i], 0.0);
        const double decay = std::exp(-sigmas[i] * deltas[i]);
        weights[i] = trans[i] * (1.0 - decay);
        trans[i + 1] = trans[i] * decay;
        acc += weights[i];
        depth_sum += weights[i] * ts[i];
    }
    const double norm = std::max(acc, kDepthEps);
    const double depth = depth_sum / norm;

    // gradient w.r.t. acc, folding in the background's (1-acc) factor
    const double g_acc = d_acc - (background ? background->dot(d_rgb) : 0.0);

    // per-weight upstream gradient, then the transmittance chain: raising
    // sigma_i grows weight i at trans[i+1] rate and shrinks every later one
    // proportionally to itself.
    Eigen::ArrayXd g_w(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double g_depth_term =
            d_depth * (ts[i] - (acc > kDepthEps ? depth : 0.0)) / norm;
        g_w[i] = colors.col(i).dot(d_rgb) + g_acc + g_depth_term;
    }

    CompositeGrad grad;
    grad.d_sigma.resize(k);
    grad.d_color.resize(3, k);
    double suffix = 0.0;  // sum over j > i of g_w[j] * weights[j]
    for (Eigen::Index i = k - 1; i >= 0; --i) {
        grad.d_sigma[i] = deltas[i] * (g_w[i] * trans[i + 1] - suffix);
        suffix += g_w[i] * weights[i];
        grad.d_color.col(i) = weights[i] * d_rgb;
    }
    return grad;
}

FieldFn make_field_fn(const PointField& field, const Eigen::VectorXd& params) {
    return [&field, params](const Eigen::Ref<const Eigen::MatrixXd>& P,
                            const Eigen::Ref<const Eigen::MatrixXd>& D) {
        return field.forward(params, P, D);
    };
}

CompositeResult render_ray(const FieldFn& field, const Ray& ray,
                           const Eigen::Ref<const Eigen::ArrayXd>& ts,
                           const std::optional<Eigen::Vector3d>& background) {
    const Eigen::Index k = ts.size();
    Eigen::MatrixXd P(3, k), D(3, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        P.col(i) = ray.origin + ts[i] * ray.direction;
        D.col(i) = ray.direction;
    }
    const PointField::Output out = field(P, D);
    return composite(out.sigma, out.rgb, ts, ray.t_far, background);
}

DepthSample render_depth(const FieldFn& field, const Ray& ray,
                         const Eigen::Ref<const Eigen::ArrayXd>& ts) {
    const CompositeResult res = render_ray(field, ray, ts, std::nullopt);
    return {res.depth, res.acc};
}

RenderedView render_view(const FieldFn& field, const Eigen::Matrix4d& camera_to_world,
                         double camera_angle_x, int width, int height, double t_near,
                         double t_far, const RenderOptions& options) {
    check_rigid(camera_to_world);
    const double f = focal_from_angle(width, camera_angle_x);
    const Eigen::Matrix3d rot = camera_to_world.topLeftCorner<3, 3>();
    const Eigen::Vector3d origin = camera_to_world.topRightCorner<3, 1>();
    if (!(t_near < t_far)) throw std::invalid_argument("render requires t_near < t_far");
    const int k = options.samples_per_ray;
    if (k < 1) throw std::invalid_argument("samples_per_ray must be >= 1");

    RenderedView view{Image(width, height, 3), Image(width, height, 1),
                      Image(width, height, 1)};
    const Eigen::ArrayXd midpoints = midpoint_sample(t_near, t_far, k);

    parallel_for_blocks(height, [&](int row) {
        Eigen::MatrixXd P(3, static_cast<Eigen::Index>(width) * k);
        Eigen::MatrixXd D(3, static_cast<Eigen::Index>(width) * k);
        Eigen::MatrixXd row_ts(k, width);
        for (int col = 0; col < width; ++col) {
            const Eigen::Vector3d dir_cam((col + 0.5 - 0.5 * width) / f,
                                          -(row + 0.5 - 0.5 * height) / f, -1.0);
            const Eigen::Vector3d dir = (rot * dir_cam).normalized();
            Eigen::ArrayXd ts;
            if (options.jitter) {
                Rng rng(mix_seed(options.seed,
                                 static_cast<std::uint64_t>(row) * width + col));
                ts = stratified_sample(t_near, t_far, k, rng);
            } else {
                ts = midpoints;
            }
            row_ts.col(col) = ts;
            for (int i = 0; i < k; ++i) {
                P.col(static_cast<Eigen::Index>(col) * k + i) = origin + ts[i] * dir;
                D.col(static_cast<Eigen::Index>(col) * k + i) = dir;
            }
        }
        const PointField::Output out = field(P, D);
        for (int col = 0; col < width; ++col) {
            const CompositeResult res =
                composite(out.sigma.segment(static_cast<Eigen::Index>(col) * k, k),
                          out.rgb.middleCols(static_cast<Eigen::Index>(col) * k, k),
                          row_ts.col(col).array(), t_far, options.background);
            for (int c = 0; c < 3; ++c) view.rgb.at(col, row, c) = res.rgb[c];
            view.depth.at(col, row, 0) = res.depth;
            view.acc.at(col, row, 0) = res.acc;
        }
    });
    return view;
}

}  // namespace halo

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "halo/fields.hpp"
#include "halo/image.hpp"
#include "halo/random.hpp"

namespace halo {

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction;  // unit
    double t_near = 0;
    double t_far = 1;

    void validate() const;
};

double focal_from_angle(int width, double camera_angle_x);

// Blender-convention pinhole rays: camera looks along its -z axis, principal
// point at the image center, pixel centers at half-integer offsets. Pixel
// order is row-major (index = row * width + col). Rejects non-rigid poses.
std::vector<Ray> generate_rays(const Eigen::Matrix4d& camera_to_world,
                               double camera_angle_x, int width, int height,
                               double t_near, double t_far);

Ray pixel_ray(const Eigen::Matrix4d& camera_to_world, double camera_angle_x,
              int width, int height, int col, int row, double t_near, double t_far);

// One sample per equal-width bin, strictly increasing.
Eigen::ArrayXd stratified_sample(double t_near, double t_far, int count, Rng& rng);

// Bin midpoints; the deterministic limit of stratified_sample.
Eigen::ArrayXd midpoint_sample(double t_near, double t_far, int count);

// ceil((1-uniform_fraction)*count) samples stratified inside the window
// [d_hat - w/2, d_hat + w/2] clipped to the ray range, the rest stratified
// over the full range, merged and sorted.
Eigen::ArrayXd depth_guided_sample(double d_hat, double window, int count,
                                   double t_near, double t_far,
                                   double uniform_fraction, Rng& rng);

// Stratified over [theta_ray - alpha*(theta_far-theta_near), theta_ray +
// alpha*(theta_far-theta_near)], then clipped into [theta_near, theta_far].
// Clipped duplicates are separated by ulp nudges so downstream quadrature
// sees strictly increasing positions.
Eigen::ArrayXd epi_theta_sample(double theta_ray, double alpha, double theta_near,
                                double theta_far, int count, Rng& rng);

struct CompositeResult {
    Eigen::Vector3d rgb;
    double acc = 0;                  // sum of weights
    double depth = 0;                // weight-normalized expected position
    double transmittance_tail = 1;   // light surviving past the last sample
    Eigen::ArrayXd weights;
};

// Quadrature of the volume rendering integral over samples at positions ts.
// Slab widths are the forward differences, with the last slab reaching
// t_far (floored at zero width). A background color, when given, receives
// the residual transmittance. The depth normalizer is floored at 1e-10 so
// empty rays stay finite; callers gate such depths on acc.
CompositeResult composite(const Eigen::Ref<const Eigen::ArrayXd>& sigmas,
                          const Eigen::Ref<const Eigen::Matrix3Xd>& colors,
                          const Eigen::Ref<const Eigen::ArrayXd>& ts, double t_far,
                          const std::optional<Eigen::Vector3d>& background);

struct CompositeGrad {
    Eigen::ArrayXd d_sigma;
    Eigen::Matrix3Xd d_color;
};

// Adjoint of composite for upstream gradients on (rgb, acc, depth). Sample
// positions are treated as constants.
CompositeGrad composite_backward(const Eigen::Ref<const Eigen::ArrayXd>& sigmas,
                                 const Eigen::Ref<const Eigen::Matrix3Xd>& colors,
                                 const Eigen::Ref<const Eigen::ArrayXd>& ts,
                                 double t_far,
                                 const std::optional<Eigen::Vector3d>& background,
                                 const Eigen::Vector3d& d_rgb, double d_acc,
                                 double d_depth);

// Batched (position, direction) -> (rgb, sigma) evaluator; lets rendering
// run against trained fields and analytic test densities alike.
using FieldFn = std::function<PointField::Output(
    const Eigen::Ref<const Eigen::MatrixXd>&, const Eigen::Ref<const Eigen::MatrixXd>&)>;

FieldFn make_field_fn(const PointField& field, const Eigen::VectorXd& params);

// Evaluates the field at ray points o + t d and composites.
CompositeResult render_ray(const FieldFn& field, const Ray& ray,
                           const Eigen::Ref<const Eigen::ArrayXd>& ts,
                           const std::optional<Eigen::Vector3d>& background);

struct DepthSample {
    double depth = 0;
    double acc = 0;
};

// Depth with the occupancy needed to gate it.
DepthSample render_depth(const FieldFn& field, const Ray& ray,
                         const Eigen::Ref<const Eigen::ArrayXd>& ts);

struct RenderOptions {
    int samples_per_ray = 64;
    std::optional<Eigen::Vector3d> background = Eigen::Vector3d::Ones();
    bool jitter = false;     // midpoint sampling unless set
    std::uint64_t seed = 0;  // per-pixel stream base when jittering
};

struct RenderedView {
    Image rgb;    // H x W x 3
    Image depth;  // H x W x 1
    Image acc;    // H x W x 1
};

// Renders a full view, parallel over rows; output is identical for any
// worker count (per-pixel sample streams, no cross-pixel reduction).
RenderedView render_view(const FieldFn& field, const Eigen::Matrix4d& camera_to_world,
                         double camera_angle_x, int width, int height, double t_near,
                         double t_far, const RenderOptions& options);

}  // namespace halo

#include "halo/fields.hpp"

#include <cmath>
#include <stdexcept>

namespace halo {

void SceneBounds::validate() const {
    if (!(t_near > 0) || !(t_near < t_far))
        throw std::invalid_argument("scene bounds require 0 < t_near < t_far");
    if (!(radius > 0)) throw std::invalid_argument("bounding sphere radius must be > 0");
    if (!(theta_near <= theta_far))
        throw std::invalid_argument("scene bounds require theta_near <= theta_far");
}

void SceneBounds::validate_epi() const {
    validate();
    if (!(theta_near < theta_far))
        throw std::invalid_argument("EPI bounds require theta_near < theta_far");
}

void to_json(nlohmann::json& j, const SceneBounds& b) {
    j = {{"t_near", b.t_near},
         {"t_far", b.t_far},
         {"radius", b.radius},
         {"theta_near", b.theta_near},
         {"theta_far", b.theta_far}};
}

void from_json(const nlohmann::json& j, SceneBounds& b) {
    b.t_near = j.value("t_near", b.t_near);
    b.t_far = j.value("t_far", b.t_far);
    b.radius = j.value("radius", b.radius);
    b.theta_near = j.value("theta_near", b.theta_near);
    b.theta_far = j.value("theta_far", b.theta_far);
}

CanonicalRay canonicalize_ray(const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double radius) {
    const double norm = direction.norm();
    if (!(norm > 0)) throw std::invalid_argument("ray direction is zero");
    const Eigen::Vector3d d = direction / norm;
    const double b = origin.dot(d);
    const double disc = b * b - origin.squaredNorm() + radius * radius;
    if (disc < 0)
        throw std::invalid_argument("ray misses the bounding sphere, cannot canonicalize");
    const double t_entry = -b - std::sqrt(disc);
    CanonicalRay r;
    r.origin = origin + t_entry * d;
    // snap onto the sphere so repeated canonicalization is a fixed point
    r.origin *= radius / r.origin.norm();
    r.direction = d;
    r.t_entry = t_entry;
    return r;
}

void PointFieldConfig::validate() const {
    if (pos_encoding.empty() || dir_encoding.empty())
        throw std::invalid_argument("point field needs position and direction encodings");
    MlpConfig m;
    m.input_dim = 1;  // placeholder; real input dim checked at construction
    m.depth = depth;
    m.width = width;
    m.skip = skip;
    m.validate();
}

void to_json(nlohmann::json& j, const PointFieldConfig& c) {
    j = {{"pos_encoding", c.pos_encoding},
         {"dir_encoding", c.dir_encoding},
         {"depth", c.depth},
         {"width", c.width},
         {"skip", c.skip}};
}

void from_json(const nlohmann::json& j, PointFieldConfig& c) {
    c.pos_encoding = j.at("pos_encoding").get<std::vector<EncodingGroup>>();
    c.dir_encoding = j.at("dir_encoding").get<std::vector<EncodingGroup>>();
    c.depth = j.value("depth", c.depth);
    c.width = j.value("width", c.width);
    c.skip = j.value("skip", c.skip);
}

PointField::PointField(const PointFieldConfig& cfg)
    : cfg_(cfg), pos_enc_(cfg.pos_encoding), dir_enc_(cfg.dir_encoding) {
    cfg_.validate();
    int cursor = 0;
    MlpConfig m;
    m.input_dim = pos_enc_.output_dim();
    m.depth = cfg_.depth;
    m.width = cfg_.width;
    m.skip = cfg_.skip;
    trunk_ = Mlp(m, &cursor);
    density_head_ = make_linear(cfg_.width, 1, &cursor);
    color_head_ = make_linear(cfg_.width + dir_enc_.output_dim(), 3, &cursor);
    param_count_ = cursor;
}

Eigen::VectorXd PointField::init_params(std::uint64_t seed) const {
    Eigen::VectorXd p(param_count_);
    Rng rng(seed);
    trunk_.init(p, rng);
    init_linear(p, density_head_, rng);
    init_linear(p, color_head_, rng);
    return p;
}

PointField::Output PointField::forward(const Eigen::VectorXd& params,
                                       const Eigen::Ref<const Eigen::MatrixXd>& P,
                                       const Eigen::Ref<const Eigen::MatrixXd>& D,
                                       Cache* cache) const {
    if (P.cols() != D.cols())
        throw std::invalid_argument("point field: position/direction batch mismatch");
    const Eigen::MatrixXd enc_p = pos_enc_.encode(P);
    const Eigen::MatrixXd enc_d = dir_enc_.encode(D);

    Mlp::Cache local_trunk;
    Mlp::Cache& tc = cache ? cache->trunk : local_trunk;
    const Eigen::MatrixXd h = trunk_.forward(params, enc_p, &tc);

    Eigen::MatrixXd color_in(cfg_.width + enc_d.rows(), P.cols());
    color_in.topRows(cfg_.width) = h;
    color_in.bottomRows(enc_d.rows()) = enc_d;

    const Eigen::ArrayXd sigma_raw = linear_forward(params, density_head_, h).row(0).array();
    Output out;
    out.sigma = softplus(sigma_raw);
    out.rgb = sigmoid(linear_forward(params, color_head_, color_in).array()).matrix();
    if (cache) {
        cache->color_in = std::move(color_in);
        cache->sigma_raw = sigma_raw;
        cache->rgb = out.rgb;
    }
    return out;
}

void PointField::backward(const Eigen::VectorXd& params, const Cache& cache,
                          const Eigen::Ref<const Eigen::MatrixXd>& d_rgb,
                          const Eigen::Ref<const Eigen::ArrayXd>& d_sigma,
                          Eigen::VectorXd& grad) const {
    const Eigen::ArrayXd d_sigma_raw =
        d_sigma * cache.sigma_raw.unaryExpr([](double v) { return sigmoid(v); });
    const Eigen::MatrixXd d_rgb_raw =
        (d_rgb.array() * cache.rgb.array() * (1.0 - cache.rgb.array())).matrix();

    const Eigen::MatrixXd& h = cache.trunk.hidden.back();
    const Eigen::MatrixXd d_color_in =
        linear_backward(params, color_head_, cache.color_in, d_rgb_raw, grad);
    Eigen::MatrixXd d_h =
        linear_backward(params, density_head_, h, d_sigma_raw.matrix().transpose(), grad);
    d_h += d_color_in.topRows(cfg_.width);
    trunk_.backward(params, cache.trunk, std::move(d_h), grad);
}

void RayFieldConfig::validate() const {
    if (encoding.empty()) throw std::invalid_argument("ray field needs an encoding");
    MlpConfig m;
    m.input_dim = 1;
    m.depth = depth;
    m.width = width;
    m.skip = skip;
    m.validate();
}

void to_json(nlohmann::json& j, const RayFieldConfig& c) {
    j = {{"encoding", c.encoding}, {"depth", c.depth}, {"width", c.width}, {"skip", c.skip}};
}

void from_json(const nlohmann::json& j, RayFieldConfig& c) {
    c.encoding = j.at("encoding").get<std::vector<EncodingGroup>>();
    c.depth = j.value("depth", c.depth);
    c.width = j.value("width", c.width);
    c.skip = j.value("skip", c.skip);
}

RayField::RayField(const RayFieldConfig& cfg) : cfg_(cfg), enc_(cfg.encoding) {
    cfg_.validate();
    int cursor = 0;
    MlpConfig m;
    m.input_dim = enc_.output_dim();
    m.depth = cfg_.depth;
    m.width = cfg_.width;
    m.skip = cfg_.skip;
    trunk_ = Mlp(m, &cursor);
    head_ = make_linear(cfg_.width, 1, &cursor);
    param_count_ = cursor;
}

Eigen::VectorXd RayField::init_params(std::uint64_t seed) const {
    Eigen::VectorXd p(param_count_);
    Rng rng(seed);
    trunk_.init(p, rng);
    init_linear(p, head_, rng);
    return p;
}

Eigen::ArrayXd RayField::forward(const Eigen::VectorXd& params,
                                 const Eigen::Ref<const Eigen::MatrixXd>& F,
                                 double out_lo, double out_hi, Cache* cache) const {
    if (!(out_lo < out_hi))
        throw std::invalid_argument("ray field output interval is empty");
    const Eigen::MatrixXd enc = enc_.encode(F);
    Mlp::Cache local_trunk;
    Mlp::Cache& tc = cache ? cache->trunk : local_trunk;
    const Eigen::MatrixXd h = trunk_.forward(params, enc, &tc);
    const Eigen::ArrayXd squash =
        sigmoid(linear_forward(params, head_, h).row(0).transpose().array());
    if (cache) cache->squash = squash;
    return out_lo + (out_hi - out_lo) * squash;
}

void RayField::backward(const Eigen::VectorXd& params, const Cache& cache,
                        const Eigen::Ref<const Eigen::ArrayXd>& d_out,
                        double out_lo, double out_hi, Eigen::VectorXd& grad) const {
    const Eigen::ArrayXd d_raw =
        d_out * (out_hi - out_lo) * cache.squash * (1.0 - cache.squash);
    const Eigen::MatrixXd& h = cache.trunk.hidden.back();
    Eigen::MatrixXd d_h =
        linear_backward(params, head_, h, d_raw.matrix().transpose(), grad);
    trunk_.backward(params, cache.trunk, std::move(d_h), grad);
}

Eigen::Matrix<double, 6, 1> canonical_ray_features(const CanonicalRay& r) {
    Eigen::Matrix<double, 6, 1> f;
    f << r.origin, r.direction;
    return f;
}

double eval_ray_depth(const RayField& field, const Eigen::VectorXd& params,
                      const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                      const SceneBounds& bounds) {
    const CanonicalRay c = canonicalize_ray(origin, direction, bounds.radius);
    const Eigen::ArrayXd out =
        field.forward(params, canonical_ray_features(c), bounds.t_near, bounds.t_far);
    return out[0];
}

}  // namespace halo

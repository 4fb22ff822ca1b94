#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "halo/encoding.hpp"
#include "halo/nn.hpp"

namespace halo {

struct SceneBounds {
    double t_near = 2.0;
    double t_far = 6.0;
    double radius = 4.4;      // bounding sphere around all cameras
    double theta_near = 0.0;  // EPI scenes only
    double theta_far = 0.0;

    void validate() const;
    void validate_epi() const;  // additionally requires theta_near < theta_far
};

void to_json(nlohmann::json& j, const SceneBounds& b);
void from_json(const nlohmann::json& j, SceneBounds& b);

// A ray re-rooted at its entry point into the bounding sphere. t_entry is
// the signed distance from the original origin to that point (negative when
// the origin already sits inside the sphere), so depths measured from the
// canonical origin convert back via depth_original = depth_canonical + t_entry.
struct CanonicalRay {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction;
    double t_entry = 0;
};

// Throws when the ray misses the sphere. Idempotent: feeding the canonical
// origin back in returns the same ray with t_entry ~ 0.
CanonicalRay canonicalize_ray(const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double radius);

// Radiance field: density from the encoded position alone, color from the
// trunk feature plus the encoded direction. Position/direction dimensions
// follow from the encoding groups (3+3 for world space, (s',t',theta)+(u,v)
// for the EPI variant).
struct PointFieldConfig {
    std::vector<EncodingGroup> pos_encoding;
    std::vector<EncodingGroup> dir_encoding;
    int depth = 8;
    int width = 256;
    int skip = 4;

    void validate() const;
};

void to_json(nlohmann::json& j, const PointFieldConfig& c);
void from_json(const nlohmann::json& j, PointFieldConfig& c);

class PointField {
public:
    explicit PointField(const PointFieldConfig& cfg);

    int pos_dim() const { return pos_enc_.input_dim(); }
    int dir_dim() const { return dir_enc_.input_dim(); }
    int param_count() const { return param_count_; }
    const PointFieldConfig& config() const { return cfg_; }

    Eigen::VectorXd init_params(std::uint64_t seed) const;

    struct Output {
        Eigen::MatrixXd rgb;    // 3 x n, sigmoid-bounded
        Eigen::ArrayXd sigma;   // n, softplus-rectified
    };
    struct Cache {
        Mlp::Cache trunk;
        Eigen::MatrixXd color_in;  // [feature; encoded dir]
        Eigen::ArrayXd sigma_raw;
        Eigen::MatrixXd rgb;
    };

    // P: pos_dim x n, D: dir_dim x n.
    Output forward(const Eigen::VectorXd& params,
                   const Eigen::Ref<const Eigen::MatrixXd>& P,
                   const Eigen::Ref<const Eigen::MatrixXd>& D,
                   Cache* cache = nullptr) const;

    void backward(const Eigen::VectorXd& params, const Cache& cache,
                  const Eigen::Ref<const Eigen::MatrixXd>& d_rgb,
                  const Eigen::Ref<const Eigen::ArrayXd>& d_sigma,
                  Eigen::VectorXd& grad) const;

private:
    PointFieldConfig cfg_;
    GroupEncoder pos_enc_, dir_enc_;
    Mlp trunk_;
    LinearLayout density_head_, color_head_;
    int param_count_ = 0;
};

// Whole-ray field: one scalar per ray, squashed into a caller-supplied
// interval by an affine sigmoid (depth in [t_near, t_far], or the EPI angle
// in [theta_near, theta_far]).
struct RayFieldConfig {
    std::vector<EncodingGroup> encoding;
    int depth = 6;
    int width = 128;
    int skip = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const RayFieldConfig& c);
void from_json(const nlohmann::json& j, RayFieldConfig& c);

class RayField {
public:
    explicit RayField(const RayFieldConfig& cfg);

    int input_dim() const { return enc_.input_dim(); }
    int param_count() const { return param_count_; }
    const RayFieldConfig& config() const { return cfg_; }

    Eigen::VectorXd init_params(std::uint64_t seed) const;

    struct Cache {
        Mlp::Cache trunk;
        Eigen::ArrayXd squash;  // sigmoid(raw head output)
    };

    // F: input_dim x n feature matrix; outputs in (out_lo, out_hi).
    Eigen::ArrayXd forward(const Eigen::VectorXd& params,
                           const Eigen::Ref<const Eigen::MatrixXd>& F,
                           double out_lo, double out_hi,
                           Cache* cache = nullptr) const;

    void backward(const Eigen::VectorXd& params, const Cache& cache,
                  const Eigen::Ref<const Eigen::ArrayXd>& d_out,
                  double out_lo, double out_hi, Eigen::VectorXd& grad) const;

private:
    RayFieldConfig cfg_;
    GroupEncoder enc_;
    Mlp trunk_;
    LinearLayout head_;
    int param_count_ = 0;
};

// Input features for the world-space ray field: canonical origin stacked on
// the unit direction.
Eigen::Matrix<double, 6, 1> canonical_ray_features(const CanonicalRay& r);

// Canonicalizes and evaluates one ray; the returned depth is measured from
// the sphere entry point (add r.t_entry for the original parameterization).
double eval_ray_depth(const RayField& field, const Eigen::VectorXd& params,
                      const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                      const SceneBounds& bounds);

}  // namespace halo

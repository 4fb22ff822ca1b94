#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <variant>

namespace halo {

// Octave encoding: per input dimension p, emits
//   sin(p/s), cos(p/s), sin(2 p/s), cos(2 p/s), ..., sin(2^{L-1} p/s), cos(2^{L-1} p/s)
// with the raw input prepended when include_identity is set. The scale s
// divides the input before every band, so it shifts the whole frequency
// ladder down at once.
struct SinusoidalEncodingConfig {
    int bands = 10;               // L
    double scale = 1.0;           // s
    bool include_identity = true;

    void validate() const;
};

// Random Fourier features: emits cos(2*pi*B x) then sin(2*pi*B x), with B
// drawn once from N(0, std^2) using the stored seed.
struct GaussianEncodingConfig {
    double std = 1.0;
    int num_features = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

using EncodingConfig = std::variant<SinusoidalEncodingConfig, GaussianEncodingConfig>;

int encoded_dim(const EncodingConfig& cfg, int input_dim);

void to_json(nlohmann::json& j, const EncodingConfig& cfg);
void from_json(const nlohmann::json& j, EncodingConfig& cfg);

// A frozen realization of an encoding for a fixed input dimension. The
// Gaussian frequency matrix is materialized once at construction and never
// mutated, so one Encoder can be shared across threads.
class Encoder {
public:
    Encoder(EncodingConfig cfg, int input_dim);

    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }
    const EncodingConfig& config() const { return cfg_; }

    // X: input_dim x batch. Rejects non-finite inputs.
    Eigen::MatrixXd encode(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
    Eigen::VectorXd encode1(const Eigen::Ref<const Eigen::VectorXd>& x) const;

    // d(encode)/dx at a single point, output_dim x input_dim.
    Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    EncodingConfig cfg_;
    int input_dim_ = 0;
    int output_dim_ = 0;
    Eigen::MatrixXd freq_;  // Gaussian B, num_features x input_dim
};

// One encoding applied to a contiguous slice of the input vector. Fields
// use lists of these so coordinate groups can carry different frequency
// content (e.g. spatial intercepts vs the EPI angle).
struct EncodingGroup {
    EncodingConfig cfg;
    int dims = 0;
};

void to_json(nlohmann::json& j, const EncodingGroup& g);
void from_json(const nlohmann::json& j, EncodingGroup& g);

// Convenience: a single group covering the whole input.
std::vector<EncodingGroup> single_group(EncodingConfig cfg, int dims);

class GroupEncoder {
public:
    GroupEncoder() = default;
    explicit GroupEncoder(const std::vector<EncodingGroup>& groups);

    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }

    // X: input_dim x batch; outputs are per-group encodings stacked in order.
    Eigen::MatrixXd encode(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

private:
    std::vector<Encoder> encoders_;
    std::vector<int> offsets_;
    int input_dim_ = 0;
    int output_dim_ = 0;
};

// A 3D point in EPI coordinates: ray-plane intercepts shifted to the
// reference camera, plus the slope angle of the point's EPI line.
struct EpiPoint {
    double s = 0;
    double t = 0;
    double theta = 0;
};

// Shifts the (s,t) intercepts of the ray (u,v,s,t) with EPI slope angle
// theta to the reference camera (u_star, v_star):
//   s' = s + (u - u*)/tan(theta),   t' = t + (v - v*)/tan(theta).
// Rays through one 3D point share a theta, and this shift maps them all to
// the same (s', t', theta) triple. Throws when |tan(theta)| is degenerate.
EpiPoint epi_align(double u, double v, double s, double t, double theta,
                   double u_star, double v_star);

}  // namespace halo

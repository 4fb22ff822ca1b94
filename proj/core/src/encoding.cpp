#include "halo/encoding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "halo/random.hpp"

namespace halo {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (!X.allFinite()) {
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            if (!X.col(c).allFinite()) {
                throw std::invalid_argument(
                    "encoding input contains a non-finite value at column " +
                    std::to_string(c));
            }
        }
    }
}

}  // namespace

void SinusoidalEncodingConfig::validate() const {
    if (bands < 0) throw std::invalid_argument("encoding bands must be >= 0");
    if (!(scale > 0) || !std::isfinite(scale))
        throw std::invalid_argument("encoding scale must be finite and > 0");
}

void GaussianEncodingConfig::validate() const {
    if (num_features < 1)
        throw std::invalid_argument("encoding num_features must be >= 1");
    if (!(std > 0) || !std::isfinite(std))
        throw std::invalid_argument("encoding std must be finite and > 0");
}

int encoded_dim(const EncodingConfig& cfg, int input_dim) {
    if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (const auto* s = std::get_if<SinusoidalEncodingConfig>(&cfg)) {
        s->validate();
        return (s->include_identity ? input_dim : 0) + input_dim * 2 * s->bands;
    }
    const auto& g = std::get<GaussianEncodingConfig>(cfg);
    g.validate();
    return 2 * g.num_features;
}

void to_json(nlohmann::json& j, const EncodingConfig& cfg) {
    if (const auto* s = std::get_if<SinusoidalEncodingConfig>(&cfg)) {
        j = {{"type", "sinusoidal"},
             {"bands", s->bands},
             {"scale", s->scale},
             {"include_identity", s->include_identity}};
    } else {
        const auto& g = std::get<GaussianEncodingConfig>(cfg);
        j = {{"type", "gaussian"},
             {"std", g.std},
             {"num_features", g.num_features},
             {"seed", g.seed}};
    }
}

void from_json(const nlohmann::json& j, EncodingConfig& cfg) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "sinusoidal") {
        SinusoidalEncodingConfig s;
        s.bands = j.value("bands", s.bands);
        s.scale = j.value("scale", s.scale);
        s.include_identity = j.value("include_identity", s.include_identity);
        cfg = s;
    } else if (type == "gaussian") {
        GaussianEncodingConfig g;
        g.std = j.value("std", g.std);
        g.num_features = j.value("num_features", g.num_features);
        g.seed = j.value("seed", g.seed);
        cfg = g;
    } else {
        throw std::invalid_argument("unknown encoding type \"" + type + "\"");
    }
}

Encoder::Encoder(EncodingConfig cfg, int input_dim)
    : cfg_(std::move(cfg)), input_dim_(input_dim) {
    output_dim_ = encoded_dim(cfg_, input_dim_);
    if (const auto* g = std::get_if<GaussianEncodingConfig>(&cfg_)) {
        Rng rng(g->seed);
        freq_.resize(g->num_features, input_dim_);
        for (int f = 0; f < g->num_features; ++f)
            for (int d = 0; d < input_dim_; ++d)
                freq_(f, d) = rng.normal(0.0, g->std);
    }
}

Eigen::MatrixXd Encoder::encode(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    if (X.rows() != input_dim_)
        throw std::invalid_argument("encoding input has " + std::to_string(X.rows()) +
                                    " rows, expected " + std::to_string(input_dim_));
    check_finite(X);
    const Eigen::Index n = X.cols();
    Eigen::MatrixXd out(output_dim_, n);

    if (const auto* s = std::get_if<SinusoidalEncodingConfig>(&cfg_)) {
        int row = 0;
        if (s->include_identity) {
            out.topRows(input_dim_) = X;
            row = input_dim_;
        }
        const Eigen::MatrixXd scaled = X / s->scale;
        for (int d = 0; d < input_dim_; ++d) {
            for (int l = 0; l < s->bands; ++l) {
                const double k = std::ldexp(1.0, l);  // 2^l
                out.row(row++) = (k * scaled.row(d)).array().sin();
                out.row(row++) = (k * scaled.row(d)).array().cos();
            }
        }
        return out;
    }

    const Eigen::MatrixXd phase = kTwoPi * (freq_ * X);
    const int m = static_cast<int>(freq_.rows());
    out.topRows(m) = phase.array().cos();
    out.bottomRows(m) = phase.array().sin();
    return out;
}

Eigen::VectorXd Encoder::encode1(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return encode(x);
}

Eigen::MatrixXd Encoder::jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != input_dim_)
        throw std::invalid_argument("jacobian input has wrong dimension");
    check_finite(x);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(output_dim_, input_dim_);

    if (const auto* s = std::get_if<SinusoidalEncodingConfig>(&cfg_)) {
        int row = 0;
        if (s->include_identity) {
            J.topRows(input_dim_).setIdentity();
            row = input_dim_;
        }
        for (int d = 0; d < input_dim_; ++d) {
            const double xs = x[d] / s->scale;
            for (int l = 0; l < s->bands; ++l) {
                const double k = std::ldexp(1.0, l);
                const double rate = k / s->scale;
                J(row++, d) = rate * std::cos(k * xs);
                J(row++, d) = -rate * std::sin(k * xs);
            }
        }
        return J;
    }

    const Eigen::VectorXd phase = kTwoPi * (freq_ * x);
    const int m = static_cast<int>(freq_.rows());
    for (int f = 0; f < m; ++f) {
        J.row(f) = -kTwoPi * std::sin(phase[f]) * freq_.row(f);
        J.row(m + f) = kTwoPi * std::cos(phase[f]) * freq_.row(f);
    }
    return J;
}

void to_json(nlohmann::json& j, const EncodingGroup& g) {
    to_json(j, g.cfg);
    j["dims"] = g.dims;
}

void from_json(const nlohmann::json& j, EncodingGroup& g) {
    from_json(j, g.cfg);
    g.dims = j.at("dims").get<int>();
}

std::vector<EncodingGroup> single_group(EncodingConfig cfg, int dims) {
    return {EncodingGroup{std::move(cfg), dims}};
}

GroupEncoder::GroupEncoder(const std::vector<EncodingGroup>& groups) {
    if (groups.empty()) throw std::invalid_argument("encoding group list is empty");
    encoders_.reserve(groups.size());
    for (const auto& g : groups) {
        offsets_.push_back(input_dim_);
        encoders_.emplace_back(g.cfg, g.dims);
        input_dim_ += g.dims;
        output_dim_ += encoders_.back().output_dim();
    }
}

Eigen::MatrixXd GroupEncoder::encode(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    if (X.rows() != input_dim_)
        throw std::invalid_argument("grouped encoding input has wrong dimension");
    Eigen::MatrixXd out(output_dim_, X.cols());
    int row = 0;
    for (std::size_t i = 0; i < encoders_.size(); ++i) {
        const auto& e = encoders_[i];
        out.middleRows(row, e.output_dim()) =
            e.encode(X.middleRows(offsets_[i], e.input_dim()));
        row += e.output_dim();
    }
    return out;
}

EpiPoint epi_align(double u, double v, double s, double t, double theta,
                   double u_star, double v_star) {
    const double slope = std::tan(theta);
    if (!std::isfinite(slope) || std::abs(slope) < 1e-12)
        throw std::invalid_argument("epi_align: slope tan(theta) is degenerate");
    EpiPoint p;
    p.s = s + (u - u_star) / slope;
    p.t = t + (v - v_star) / slope;
    p.theta = theta;
    return p;
}

}  // namespace halo

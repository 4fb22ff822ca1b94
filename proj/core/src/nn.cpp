#include "halo/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace halo {

double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_derivative(double x) { return sigmoid(x); }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) { return softplus(v); });
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

LinearLayout make_linear(int in, int out, int* cursor) {
    if (in < 1 || out < 1) throw std::invalid_argument("linear layer dims must be >= 1");
    LinearLayout l;
    l.in = in;
    l.out = out;
    l.w_offset = *cursor;
    l.b_offset = *cursor + in * out;
    *cursor += l.param_count();
    return l;
}

Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& params,
                                         const LinearLayout& l) {
    return {params.data() + l.w_offset, l.out, l.in};
}

Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& params,
                                       const LinearLayout& l) {
    return {params.data() + l.b_offset, l.out};
}

Eigen::Map<Eigen::MatrixXd> weight(Eigen::VectorXd& params, const LinearLayout& l) {
    return {params.data() + l.w_offset, l.out, l.in};
}

Eigen::Map<Eigen::VectorXd> bias(Eigen::VectorXd& params, const LinearLayout& l) {
    return {params.data() + l.b_offset, l.out};
}

void init_linear(Eigen::VectorXd& params, const LinearLayout& l, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (int i = 0; i < l.param_count(); ++i)
        params[l.w_offset + i] = rng.uniform(-bound, bound);
}

Eigen::MatrixXd linear_forward(const Eigen::VectorXd& params, const LinearLayout& l,
                               const Eigen::Ref<const Eigen::MatrixXd>& X) {
    return (weight(params, l) * X).colwise() + bias(params, l);
}

Eigen::MatrixXd linear_backward(const Eigen::VectorXd& params, const LinearLayout& l,
                                const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::MatrixXd>& dY,
                                Eigen::VectorXd& grad) {
    Eigen::Map<Eigen::MatrixXd> dW(grad.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + l.b_offset, l.out);
    dW.noalias() += dY * X.transpose();
    db += dY.rowwise().sum();
    return weight(params, l).transpose() * dY;
}

void MlpConfig::validate() const {
    if (input_dim < 1) throw std::invalid_argument("mlp input_dim must be >= 1");
    if (depth < 1) throw std::invalid_argument("mlp depth must be >= 1");
    if (width < 1) throw std::invalid_argument("mlp width must be >= 1");
    if (skip != 0 && (skip < 2 || skip > depth))
        throw std::invalid_argument("mlp skip layer must be 0 or in [2, depth]");
}

Mlp::Mlp(const MlpConfig& cfg, int* cursor) : cfg_(cfg) {
    cfg_.validate();
    layers_.reserve(cfg_.depth);
    for (int l = 1; l <= cfg_.depth; ++l) {
        const int in = (l == 1 ? cfg_.input_dim : cfg_.width) +
                       (l == cfg_.skip ? cfg_.input_dim : 0);
        layers_.push_back(make_linear(in, cfg_.width, cursor));
    }
}

int Mlp::param_count() const {
    int n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
}

void Mlp::init(Eigen::VectorXd& params, Rng& rng) const {
    for (const auto& l : layers_) init_linear(params, l, rng);
}

Eigen::MatrixXd Mlp::forward(const Eigen::VectorXd& params,
                             const Eigen::Ref<const Eigen::MatrixXd>& X,
                             Cache* cache) const {
    if (X.rows() != cfg_.input_dim)
        throw std::invalid_argument("mlp input has wrong dimension");
    if (cache) {
        cache->input = X;
        cache->hidden.clear();
        cache->hidden.reserve(layers_.size());
    }
    Eigen::MatrixXd h;
    for (int l = 1; l <= cfg_.depth; ++l) {
        Eigen::MatrixXd in;
        if (l == 1) {
            in = X;
        } else if (l == cfg_.skip) {
            in.resize(cfg_.width + cfg_.input_dim, X.cols());
            in.topRows(cfg_.width) = h;
            in.bottomRows(cfg_.input_dim) = X;
        } else {
            in = std::move(h);
        }
        h = linear_forward(params, layers_[l - 1], in).cwiseMax(0.0);
        if (cache) cache->hidden.push_back(h);
    }
    return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::VectorXd& params, const Cache& cache,
                              Eigen::MatrixXd dH, Eigen::VectorXd& grad) const {
    const Eigen::MatrixXd& X = cache.input;
    Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(cfg_.input_dim, X.cols());
    for (int l = cfg_.depth; l >= 1; --l) {
        // ReLU mask from the stored post-activation; relu'(0) taken as 0.
        dH.array() *= (cache.hidden[l - 1].array() > 0.0).cast<double>();
        Eigen::MatrixXd in;
        if (l == 1) {
            in = X;
        } else if (l == cfg_.skip) {
            in.resize(cfg_.width + cfg_.input_dim, X.cols());
            in.topRows(cfg_.width) = cache.hidden[l - 2];
            in.bottomRows(cfg_.input_dim) = X;
        } else {
            in = cache.hidden[l - 2];
        }
        Eigen::MatrixXd dIn = linear_backward(params, layers_[l - 1], in, dH, grad);
        if (l == 1) {
            dX += dIn;
            break;
        }
        if (l == cfg_.skip) {
            dX += dIn.bottomRows(cfg_.input_dim);
            dH = dIn.topRows(cfg_.width);
        } else {
            dH = std::move(dIn);
        }
    }
    return dX;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double lr, const AdamConfig& cfg) {
    if (params.size() != grad.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.step += 1;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

double lr_exponential(double lr_start, double lr_end, long step, long total_steps) {
    if (total_steps <= 0) return lr_start;
    if (step <= 0) return lr_start;
    if (step >= total_steps) return lr_end;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_start * std::pow(lr_end / lr_start, t);
}

}  // namespace halo

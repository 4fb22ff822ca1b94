#pragma once

#include <Eigen/Core>
#include <vector>

#include "halo/random.hpp"

namespace halo {

// Numerically stable scalar activations.
double softplus(double x);
double softplus_derivative(double x);  // = sigmoid(x)
double sigmoid(double x);

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x);
Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x);

// All model parameters live in one flat vector so the optimizer and the
// checkpoint format never have to know the architecture. A LinearLayout
// records where one affine layer's weight (out x in, column-major) and bias
// sit inside that vector.
struct LinearLayout {
    int in = 0;
    int out = 0;
    int w_offset = 0;
    int b_offset = 0;

    int param_count() const { return in * out + out; }
};

// Reserves space for an in->out layer at *cursor and advances it.
LinearLayout make_linear(int in, int out, int* cursor);

Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& params,
                                         const LinearLayout& l);
Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& params,
                                       const LinearLayout& l);
Eigen::Map<Eigen::MatrixXd> weight(Eigen::VectorXd& params, const LinearLayout& l);
Eigen::Map<Eigen::VectorXd> bias(Eigen::VectorXd& params, const LinearLayout& l);

// Uniform on +-1/sqrt(fan_in) for weight and bias, filled in storage order.
void init_linear(Eigen::VectorXd& params, const LinearLayout& l, Rng& rng);

// Y = W X + b with X: in x n.
Eigen::MatrixXd linear_forward(const Eigen::VectorXd& params, const LinearLayout& l,
                               const Eigen::Ref<const Eigen::MatrixXd>& X);

// Accumulates dW, db into grad and returns dX.
Eigen::MatrixXd linear_backward(const Eigen::VectorXd& params, const LinearLayout& l,
                                const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::MatrixXd>& dY,
                                Eigen::VectorXd& grad);

struct MlpConfig {
    int input_dim = 0;
    int depth = 4;   // number of hidden layers
    int width = 64;
    int skip = 0;    // 1-based hidden layer whose input is [h_prev; X]; 0 disables

    void validate() const;
};

// ReLU hidden stack emitting a width-dim feature; output heads are separate
// LinearLayouts owned by the caller. Layer indices are 1-based, so skip=4
// means the fourth hidden layer sees the raw encoded input again.
class Mlp {
public:
    Mlp() = default;
    Mlp(const MlpConfig& cfg, int* cursor);

    struct Cache {
        Eigen::MatrixXd input;
        std::vector<Eigen::MatrixXd> hidden;  // post-ReLU, one per layer
    };

    // X: input_dim x n. Returns width x n. Pass a cache to enable backward.
    Eigen::MatrixXd forward(const Eigen::VectorXd& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& X,
                            Cache* cache = nullptr) const;

    // dH: gradient w.r.t. the emitted feature. Accumulates into grad and
    // returns the gradient w.r.t. X (including skip contributions).
    Eigen::MatrixXd backward(const Eigen::VectorXd& params, const Cache& cache,
                             Eigen::MatrixXd dH, Eigen::VectorXd& grad) const;

    const MlpConfig& config() const { return cfg_; }
    const std::vector<LinearLayout>& layers() const { return layers_; }
    int output_dim() const { return cfg_.width; }
    int param_count() const;

    void init(Eigen::VectorXd& params, Rng& rng) const;

private:
    MlpConfig cfg_;
    std::vector<LinearLayout> layers_;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;

    explicit AdamState(Eigen::Index n = 0)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, double lr, const AdamConfig& cfg = {});

// Geometric interpolation from lr_start at step 0 to lr_end at total_steps,
// clamped outside that range.
double lr_exponential(double lr_start, double lr_end, long step, long total_steps);

}  // namespace halo

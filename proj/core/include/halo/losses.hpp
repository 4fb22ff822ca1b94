#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace halo {

struct LossWeights {
    double lambda_empty = 0.1;   // weight on the empty-space term
    double tau = 0.01;           // occupancy threshold splitting content from empty
    double lambda_consist = 1.0; // weight on the EPI angle-consistency term

    void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// Losses operate on already-evaluated batches; freezing a field means simply
// not backpropagating its side. Each optionally emits the gradient w.r.t.
// its first argument. All are batch-size normalized.

// Mean per-ray squared color error.
double loss_reconstruction(const Eigen::Ref<const Eigen::Matrix3Xd>& pred,
                           const Eigen::Ref<const Eigen::Matrix3Xd>& gt,
                           Eigen::Matrix3Xd* d_pred = nullptr);

struct GatedLoss {
    double value = 0;
    int used = 0;     // rays that passed the occupancy gate
    int skipped = 0;  // rays excluded by it
};

// Depth regression against the frozen low-frequency field, restricted to
// rays whose occupancy clears tau; an empty gate yields 0 (callers count
// the skip as a warning).
GatedLoss loss_ray_distill(const Eigen::Ref<const Eigen::ArrayXd>& pred_depth,
                           const Eigen::Ref<const Eigen::ArrayXd>& target_depth,
                           const Eigen::Ref<const Eigen::ArrayXd>& target_acc,
                           double tau, Eigen::ArrayXd* d_pred = nullptr);

// Mean high-field occupancy over rays the low field deems empty; divisor is
// the full candidate batch size.
double loss_empty(const Eigen::Ref<const Eigen::ArrayXd>& acc_hi,
                  const Eigen::Ref<const Eigen::ArrayXd>& acc_lo, double tau,
                  Eigen::ArrayXd* d_acc_hi = nullptr);

// Mean squared difference between ray-field angles and (detached) composited
// angles from the radiance field.
double loss_consist(const Eigen::Ref<const Eigen::ArrayXd>& theta_pred,
                    const Eigen::Ref<const Eigen::ArrayXd>& theta_target,
                    Eigen::ArrayXd* d_pred = nullptr);

double loss_total(double reconstruction, double empty, const LossWeights& w);

}  // namespace halo

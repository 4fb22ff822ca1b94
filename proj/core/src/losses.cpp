#include "halo/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace halo {

void LossWeights::validate() const {
    if (!(tau > 0) || !(tau < 1)) throw std::invalid_argument("tau must lie in (0,1)");
    if (!(lambda_empty >= 0) || !std::isfinite(lambda_empty))
        throw std::invalid_argument("lambda_empty must be finite and >= 0");
    if (!(lambda_consist >= 0) || !std::isfinite(lambda_consist))
        throw std::invalid_argument("lambda_consist must be finite and >= 0");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"lambda_empty", w.lambda_empty},
         {"tau", w.tau},
         {"lambda_consist", w.lambda_consist}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    w.lambda_empty = j.value("lambda_empty", w.lambda_empty);
    w.tau = j.value("tau", w.tau);
    w.lambda_consist = j.value("lambda_consist", w.lambda_consist);
}

double loss_reconstruction(const Eigen::Ref<const Eigen::Matrix3Xd>& pred,
                           const Eigen::Ref<const Eigen::Matrix3Xd>& gt,
                           Eigen::Matrix3Xd* d_pred) {
    if (pred.cols() != gt.cols())
        throw std::invalid_argument("reconstruction loss batch mismatch");
    const double n = static_cast<double>(pred.cols());
    const Eigen::Matrix3Xd diff = pred - gt;
    if (d_pred) *d_pred = (2.0 / n) * diff;
    return diff.squaredNorm() / n;
}

GatedLoss loss_ray_distill(const Eigen::Ref<const Eigen::ArrayXd>& pred_depth,
                           const Eigen::Ref<const Eigen::ArrayXd>& target_depth,
                           const Eigen::Ref<const Eigen::ArrayXd>& target_acc,
                           double tau, Eigen::ArrayXd* d_pred) {
    const Eigen::Index n = pred_depth.size();
    if (target_depth.size() != n || target_acc.size() != n)
        throw std::invalid_argument("distillation loss batch mismatch");
    if (d_pred) *d_pred = Eigen::ArrayXd::Zero(n);

    GatedLoss out;
    double sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (target_acc[i] >= tau) {
            sum += (pred_depth[i] - target_depth[i]) * (pred_depth[i] - target_depth[i]);
            ++out.used;
        } else {
            ++out.skipped;
        }
    }
    if (out.used == 0) return out;
    out.value = sum / out.used;
    if (d_pred) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (target_acc[i] >= tau)
                (*d_pred)[i] = 2.0 * (pred_depth[i] - target_depth[i]) / out.used;
    }
    return out;
}

double loss_empty(const Eigen::Ref<const Eigen::ArrayXd>& acc_hi,
                  const Eigen::Ref<const Eigen::ArrayXd>& acc_lo, double tau,
                  Eigen::ArrayXd* d_acc_hi) {
    const Eigen::Index n = acc_hi.size();
    if (acc_lo.size() != n) throw std::invalid_argument("empty loss batch mismatch");
    if (n == 0) throw std::invalid_argument("empty loss needs a nonempty batch");
    if (d_acc_hi) *d_acc_hi = Eigen::ArrayXd::Zero(n);

    double sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (acc_lo[i] < tau) {
            sum += acc_hi[i];
            if (d_acc_hi) (*d_acc_hi)[i] = 1.0 / n;
        }
    }
    return sum / n;
}

double loss_consist(const Eigen::Ref<const Eigen::ArrayXd>& theta_pred,
                    const Eigen::Ref<const Eigen::ArrayXd>& theta_target,
                    Eigen::ArrayXd* d_pred) {
    const Eigen::Index n = theta_pred.size();
    if (theta_target.size() != n)
        throw std::invalid_argument("consistency loss batch mismatch");
    if (n == 0) throw std::invalid_argument("consistency loss needs a nonempty batch");
    const Eigen::ArrayXd diff = theta_pred - theta_target;
    if (d_pred) *d_pred = (2.0 / n) * diff;
    return diff.square().sum() / n;
}

double loss_total(double reconstruction, double empty, const LossWeights& w) {
    return reconstruction + w.lambda_empty * empty;
}

}  // namespace halo

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "halo/nn.hpp"

namespace halo {

// Versioned training snapshot: JSON metadata plus named double arrays,
// stored as raw little-endian bytes so save -> load -> save is
// byte-identical. Metadata keys are emitted in sorted order for the same
// reason.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Eigen::VectorXd>> arrays;

    bool has(const std::string& name) const;
    const Eigen::VectorXd& array(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameter vector plus optimizer moments under a common name prefix.
void add_train_state(Checkpoint& ck, const std::string& prefix,
                     const Eigen::VectorXd& params, const AdamState& adam);
void read_train_state(const Checkpoint& ck, const std::string& prefix,
                      Eigen::VectorXd& params, AdamState& adam);

}  // namespace halo

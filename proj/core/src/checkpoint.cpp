#include "halo/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace halo {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'L', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, _] : arrays)
        if (n == name) return true;
    return false;
}

const Eigen::VectorXd& Checkpoint::array(const std::string& name) const {
    for (const auto& [n, v] : arrays)
        if (n == name) return v;
    throw std::runtime_error("checkpoint has no array \"" + name + "\"");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());

    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    const std::string meta = ck.meta.dump();
    write_pod(out, static_cast<std::uint64_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod(out, static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& [name, vec] : ck.arrays) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint64_t>(vec.size()));
        out.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(vec.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(version));

    Checkpoint ck;
    const auto meta_len = read_pod<std::uint64_t>(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw std::runtime_error("checkpoint truncated");
    ck.meta = nlohmann::json::parse(meta);

    const auto count = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto size = read_pod<std::uint64_t>(in);
        Eigen::VectorXd vec(static_cast<Eigen::Index>(size));
        in.read(reinterpret_cast<char*>(vec.data()),
                static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated");
        ck.arrays.emplace_back(std::move(name), std::move(vec));
    }
    return ck;
}

void add_train_state(Checkpoint& ck, const std::string& prefix,
                     const Eigen::VectorXd& params, const AdamState& adam) {
    ck.arrays.emplace_back(prefix + ".params", params);
    ck.arrays.emplace_back(prefix + ".adam_m", adam.m);
    ck.arrays.emplace_back(prefix + ".adam_v", adam.v);
    ck.meta["adam_step"][prefix] = adam.step;
}

void read_train_state(const Checkpoint& ck, const std::string& prefix,
                      Eigen::VectorXd& params, AdamState& adam) {
    params = ck.array(prefix + ".params");
    adam.m = ck.array(prefix + ".adam_m");
    adam.v = ck.array(prefix + ".adam_v");
    adam.step = ck.meta.at("adam_step").at(prefix).get<long>();
}

}  // namespace halo

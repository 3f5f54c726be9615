#ifndef UAP_CLI_HPP
#define UAP_CLI_HPP

#include "uap/attacks.hpp"
#include "uap/diffnet.hpp"
#include "uap/norms.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace uap::cli {

namespace fs = std::filesystem;

struct TrainSection {
    std::size_t epochs = 3;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    // "inverse_frequency", "uniform", or explicit per-class weights.
    std::variant<std::string, std::vector<double>> class_weights = std::string("inverse_frequency");
};

struct AttackSection {
    AttackMode mode = AttackMode::Nontargeted;
    std::optional<std::string> target;  // class name
    Norm p = Norm::Linf;
    std::optional<double> zeta = 0.10;  // exactly one of zeta / xi is set
    std::optional<double> xi;
    bool zeta_train_only = false;       // resolve zeta on the training split instead of train + test
    double eps = 0.001;                 // relative to the pixel domain width
    std::size_t i_max = 15;
    bool random_control = false;
};

struct DefenseSection {
    std::size_t n_uaps = 10;
    std::size_t extra_epochs = 5;
    std::size_t iterations = 5;
    double mix_fraction = 0.5;
    std::optional<double> learning_rate;  // defaults to train.learning_rate
    std::optional<std::size_t> batch_size;
    bool record_wall_time = false;
};

// Everything one command needs. Relative paths in a config file resolve
// against the file's directory; paths given on the command line against the
// working directory.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    fs::path dataset;                 // manifest
    fs::path model;                   // checkpoint read by attack / eval / retrain
    fs::path perturbation;            // UAPF read by eval
    std::optional<std::vector<LayerSpec>> architecture;  // default: desk CNN
    TrainSection train;
    AttackSection attack;
    DefenseSection defense;
    fs::path out = "out";

    static ExperimentConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
    static ExperimentConfig load(const fs::path& path);

    // All defaults materialised. num_classes fills the default architecture.
    nlohmann::ordered_json to_json(std::optional<std::size_t> num_classes = std::nullopt) const;

    void validate() const;
};

// conv(8, 5x5) -> relu -> maxpool 2 -> flatten -> dense 32 -> relu -> dense K -> softmax
std::vector<LayerSpec> desk_architecture(std::size_t num_classes);

nlohmann::ordered_json architecture_to_json(std::span<const LayerSpec> specs);
std::vector<LayerSpec> architecture_from_json(const nlohmann::json& j);

// Parses argv, runs one subcommand and returns the process exit status:
// 0 on success, 1 when the command failed, 2 on a usage error.
int run(int argc, const char* const* argv);

}  // namespace uap::cli

#endif  // UAP_CLI_HPP

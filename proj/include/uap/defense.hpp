#ifndef UAP_DEFENSE_HPP
#define UAP_DEFENSE_HPP

#include "uap/attacks.hpp"
#include "uap/dataset.hpp"
#include "uap/diffnet.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace uap {

struct RetrainConfig {
    std::size_t n_uaps = 10;
    std::size_t extra_epochs = 5;
    std::size_t iterations = 5;
    AttackBudget budget;
    AttackParams attack;
    double mix_fraction = 0.5;  // share of training images kept clean
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RetrainRecord {
    std::size_t iteration = 0;  // 1-based
    double metric = 0.0;        // fresh-UAP R_f (nontargeted) or R_s (targeted) on the test split
    double clean_accuracy = 0.0;
    double seconds = 0.0;
};

struct RetrainHistory {
    std::string metric_name;
    std::vector<RetrainRecord> records;
};

// Training set for one fine-tuning round. Image i is clean when
// uap_index[i] is empty, otherwise clip(original + uaps[*uap_index[i]]).
struct MixedSet {
    Dataset data;
    std::vector<std::optional<std::size_t>> uap_index;

    std::size_t clean_count() const;
};

// ceil(mix_fraction * N) images, chosen from the retrain-mix stream of
// `seed`, stay clean; each of the rest gets one uniformly chosen UAP.
MixedSet build_mixed_set(const Dataset& train, std::span<const Perturbation> uaps, double mix_fraction,
                         std::uint64_t seed);

// Called after each completed iteration.
using RetrainObserver = std::function<void(const RetrainRecord&, const Network&)>;

// Each iteration: n_uaps UAPs against the current net on train_data, a
// half-clean/half-perturbed training set, extra_epochs of fine-tuning, one
// fresh UAP against the tuned net, and its rate on test_data plus clean test
// accuracy.
std::pair<Network, RetrainHistory> adversarial_retrain(Network net, const Dataset& train_data,
                                                       const Dataset& test_data, const RetrainConfig& cfg,
                                                       const RetrainObserver& observer = {});

// Seeds used inside iteration t (0-based).
std::uint64_t retrain_uap_seed(const RetrainConfig& cfg, std::size_t iteration, std::size_t uap_index);
std::uint64_t retrain_fresh_seed(const RetrainConfig& cfg, std::size_t iteration);
std::uint64_t retrain_round_seed(const RetrainConfig& cfg, std::size_t iteration);

nlohmann::ordered_json to_json(const RetrainHistory& history);

// Columns: iteration, metric, clean_accuracy, seconds.
std::string history_csv(const RetrainHistory& history);

}  // namespace uap

#endif  // UAP_DEFENSE_HPP

#include "uap/defense.hpp"

#include "uap/evaluation.hpp"
#include "uap/rng.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace uap {

void RetrainConfig::validate() const {
    if (n_uaps == 0) throw std::invalid_argument("retraining needs at least one UAP per iteration");
    if (extra_epochs == 0) throw std::invalid_argument("retraining needs at least one extra epoch");
    if (!(mix_fraction > 0.0 && mix_fraction < 1.0)) throw std::invalid_argument("mix fraction must lie in (0, 1)");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("fine-tuning learning rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("fine-tuning batch size must be positive");
    budget.validate();
    attack.validate();
}

std::size_t MixedSet::clean_count() const {
    std::size_t n = 0;
    for (const auto& u : uap_index) n += !u.has_value();
    return n;
}

MixedSet build_mixed_set(const Dataset& train, std::span<const Perturbation> uaps, double mix_fraction,
                         std::uint64_t seed) {
    if (uaps.empty()) throw std::invalid_argument("mixed set needs at least one UAP");
    if (!(mix_fraction > 0.0 && mix_fraction < 1.0)) throw std::invalid_argument("mix fraction must lie in (0, 1)");
    const std::size_t n = train.size();
    const auto n_clean = static_cast<std::size_t>(std::ceil(mix_fraction * static_cast<double>(n)));

    Rng rng(seed, streams::kRetrainMix);
    const auto order = rng.permutation(n);
    MixedSet out{train, std::vector<std::optional<std::size_t>>(n)};
    for (std::size_t j = n_clean; j < n; ++j) {
        const std::size_t i = order[j];
        const std::size_t u = rng.index(uaps.size());
        out.uap_index[i] = u;
        out.data.images[i] = perturb(train.images[i], uaps[u].tensor, train.domain);
    }
    return out;
}

std::uint64_t retrain_uap_seed(const RetrainConfig& cfg, std::size_t iteration, std::size_t uap_index) {
    return cfg.attack.seed + iteration * (cfg.n_uaps + 1) + uap_index;
}

std::uint64_t retrain_fresh_seed(const RetrainConfig& cfg, std::size_t iteration) {
    return retrain_uap_seed(cfg, iteration, cfg.n_uaps);
}

std::uint64_t retrain_round_seed(const RetrainConfig& cfg, std::size_t iteration) { return cfg.seed + iteration; }

std::pair<Network, RetrainHistory> adversarial_retrain(Network net, const Dataset& train_data,
                                                       const Dataset& test_data, const RetrainConfig& cfg,
                                                       const RetrainObserver& observer) {
    cfg.validate();
    const bool targeted = cfg.attack.mode == AttackMode::Targeted;
    RetrainHistory history{targeted ? "R_s" : "R_f", {}};
    if (cfg.iterations == 0) return {std::move(net), std::move(history)};
    if (train_data.empty() || test_data.empty()) throw std::invalid_argument("retraining needs nonempty datasets");
    if (train_data.image_shape() != net.input_shape() || test_data.image_shape() != net.input_shape())
        throw std::invalid_argument("dataset image shape does not match network input " + shape_string(net.input_shape()));

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const auto started = std::chrono::steady_clock::now();

        std::vector<Perturbation> uaps;
        uaps.reserve(cfg.n_uaps);
        for (std::size_t k = 0; k < cfg.n_uaps; ++k) {
            AttackParams params = cfg.attack;
            params.seed = retrain_uap_seed(cfg, t, k);
            uaps.push_back(generate_uap(net, train_data, cfg.budget, params));
        }

        const MixedSet mixed = build_mixed_set(train_data, uaps, cfg.mix_fraction, retrain_round_seed(cfg, t));
        try {
            net = train(std::move(net), mixed.data,
                        TrainOptions{cfg.extra_epochs, cfg.learning_rate, cfg.batch_size, retrain_round_seed(cfg, t)});
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("fine-tuning failed in retraining iteration " + std::to_string(t + 1) + ": " +
                                     e.what());
        }

        AttackParams fresh_params = cfg.attack;
        fresh_params.seed = retrain_fresh_seed(cfg, t);
        const Perturbation fresh = generate_uap(net, train_data, cfg.budget, fresh_params);

        RetrainRecord rec;
        rec.iteration = t + 1;
        rec.metric = targeted ? targeted_success_rate(net, test_data, fresh, *cfg.attack.target)
                              : fooling_rate(net, test_data, fresh);
        rec.clean_accuracy = accuracy(net, test_data);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        history.records.push_back(rec);
        if (observer) observer(rec, net);
    }
    return {std::move(net), std::move(history)};
}

nlohmann::ordered_json to_json(const RetrainHistory& history) {
    nlohmann::ordered_json j;
    j["metric"] = history.metric_name;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : history.records)
        rows.push_back({{"iteration", r.iteration},
                        {"metric", r.metric},
                        {"clean_accuracy", r.clean_accuracy},
                        {"seconds", r.seconds}});
    j["records"] = std::move(rows);
    return j;
}

std::string history_csv(const RetrainHistory& history) {
    std::ostringstream out;
    out.precision(17);
    out << "iteration,metric,clean_accuracy,seconds\n";
    for (const auto& r : history.records)
        out << r.iteration << ',' << r.metric << ',' << r.clean_accuracy << ',' << r.seconds << '\n';
    return out.str();
}

}  // namespace uap

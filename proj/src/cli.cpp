#include "uap/cli.hpp"

#include "uap/binary_io.hpp"
#include "uap/data_io.hpp"
#include "uap/defense.hpp"
#include "uap/evaluation.hpp"
#include "uap/rng.hpp"
#include "uap/synthetic_digits.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <set>
#include <stdexcept>

namespace uap::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.contains(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(where + "." + key + " has the wrong type");
    }
}

std::size_t count_field(const json& j, const char* key, const std::string& where) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw std::invalid_argument(where + "." + key + " must be a nonnegative integer");
    return v.get<std::size_t>();
}

fs::path path_field(const json& j, const char* key, const fs::path& base) {
    const auto p = fs::path(field<std::string>(j, key, "config"));
    return p.empty() || p.is_absolute() ? p : base / p;
}

ojson path_json(const fs::path& p) { return p.empty() ? ojson(nullptr) : ojson(p.generic_string()); }

template <typename T>
ojson optional_json(const std::optional<T>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

ojson streams_json(std::uint64_t seed) {
    ojson j;
    j["rule"] = "splitmix64(seed ^ fnv1a64(stream name))";
    for (auto s : {streams::kWeightInit, streams::kTrainShuffle, streams::kUapOrder, streams::kRandomUap,
                   streams::kRetrainMix, streams::kSynthDigits})
        j[std::string(s)] = derive_seed(seed, s);
    return j;
}

// Files written by one command. Unless committed, everything registered is
// deleted again on scope exit.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
    Outputs(const Outputs&) = delete;
    Outputs& operator=(const Outputs&) = delete;
    ~Outputs() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : files_) {
            fs::remove(p, ec);
            fs::remove(fs::path(p) += ".partial", ec);
        }
    }

    fs::path operator()(const std::string& name) {
        if (files_.empty()) fs::create_directories(dir_);
        files_.push_back(dir_ / name);
        return files_.back();
    }

    void commit() { committed_ = true; }

private:
    fs::path dir_;
    std::vector<fs::path> files_;
    bool committed_ = false;
};

void write_json(const fs::path& path, const ojson& j) { write_file(path, j.dump(2) + "\n"); }

struct Loaded {
    DatasetManifest manifest;
    Dataset train;
    Dataset test;
};

DatasetManifest load_manifest(const ExperimentConfig& cfg) {
    if (cfg.dataset.empty()) throw std::invalid_argument("no dataset manifest given (config 'dataset' or --dataset)");
    return DatasetManifest::load(cfg.dataset);
}

Loaded load_data(DatasetManifest manifest) {
    Dataset train = load_dataset(manifest, Split::Train);
    Dataset test = load_dataset(manifest, Split::Test);
    if (train.empty() || test.empty()) throw std::invalid_argument("both dataset splits must be nonempty");
    return {std::move(manifest), std::move(train), std::move(test)};
}

std::optional<ClassId> resolve_target(const ExperimentConfig& cfg, const DatasetManifest& m) {
    if (cfg.attack.mode != AttackMode::Targeted) return std::nullopt;
    const auto it = std::find(m.class_names.begin(), m.class_names.end(), *cfg.attack.target);
    if (it == m.class_names.end()) throw std::invalid_argument("target class '" + *cfg.attack.target + "' is not in the dataset");
    return static_cast<ClassId>(it - m.class_names.begin());
}

Network load_checked_model(const ExperimentConfig& cfg, const Loaded& data) {
    if (cfg.model.empty()) throw std::invalid_argument("no model checkpoint given (config 'model' or --model)");
    Network net = load_model(cfg.model);
    if (net.input_shape() != data.train.image_shape())
        throw std::invalid_argument("model input " + shape_string(net.input_shape()) + " does not match dataset images " +
                                    shape_string(data.train.image_shape()));
    if (net.num_classes() != data.manifest.class_names.size())
        throw std::invalid_argument("model has " + std::to_string(net.num_classes()) + " classes, dataset has " +
                                    std::to_string(data.manifest.class_names.size()));
    return net;
}

AttackBudget resolve(const ExperimentConfig& cfg, const Loaded& data) {
    if (cfg.attack.zeta)
        return resolve_budget(*cfg.attack.zeta, cfg.attack.zeta_train_only ? data.train : pooled(data.train, data.test),
                              cfg.attack.p);
    AttackBudget b{cfg.attack.p, *cfg.attack.xi, std::nullopt};
    b.validate();
    return b;
}

AttackParams attack_params(const ExperimentConfig& cfg, const Loaded& data, std::optional<ClassId> target) {
    AttackParams p;
    p.eps = cfg.attack.eps * data.train.domain.width();
    p.i_max = cfg.attack.i_max;
    p.mode = cfg.attack.mode;
    p.target = target;
    p.seed = cfg.seed;
    p.validate();
    return p;
}

ojson report_header(const std::string& command, const ExperimentConfig& cfg, std::size_t num_classes) {
    ojson j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config"] = cfg.to_json(num_classes);
    j["streams"] = streams_json(cfg.seed);
    return j;
}

ojson budget_json(const AttackBudget& b, double eps_pixels) {
    ojson j;
    j["norm"] = to_string(b.p);
    j["xi"] = b.xi;
    j["zeta"] = optional_json(b.zeta);
    j["eps_pixels"] = eps_pixels;
    return j;
}

void cmd_make_digits(const ExperimentConfig& cfg) {
    SyntheticDigitsOptions opts = desk_digits_preset(cfg.seed);
    Outputs out(cfg.out);
    for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "test-images-idx3-ubyte",
                             "test-labels-idx1-ubyte", "manifest.json"})
        out(name);
    write_synthetic_corpus(cfg.out, opts);
    out.commit();
    std::cout << "wrote " << (cfg.out / "manifest.json").string() << "\n";
}

std::vector<double> class_weights_for(const TrainSection& t, const Dataset& train) {
    if (const auto* named = std::get_if<std::string>(&t.class_weights)) {
        if (*named == "inverse_frequency") return inverse_frequency_weights(train);
        return std::vector<double>(train.num_classes(), 1.0);
    }
    return std::get<std::vector<double>>(t.class_weights);
}

void cmd_train(const ExperimentConfig& cfg) {
    const Loaded data = load_data(load_manifest(cfg));
    const std::size_t k = data.manifest.class_names.size();
    const auto arch = cfg.architecture.value_or(desk_architecture(k));
    Network net = Network::build(data.train.image_shape(), arch, cfg.seed);
    net.set_class_weights(class_weights_for(cfg.train, data.train));

    const double untrained = accuracy(net, data.test);
    net = train(std::move(net), data.train,
                TrainOptions{cfg.train.epochs, cfg.train.learning_rate, cfg.train.batch_size, cfg.seed});

    Outputs out(cfg.out);
    const auto model_path = out("model.dnet");
    save_model(net, model_path);

    ojson rep = report_header("train", cfg, k);
    rep["model_file"] = model_path.filename().generic_string();
    rep["parameter_count"] = net.parameter_count();
    rep["class_weights"] = net.class_weights();
    rep["untrained_test_accuracy"] = untrained;
    rep["train"] = to_json(evaluate(net, data.train));
    rep["test"] = to_json(evaluate(net, data.test));
    write_json(out("train_report.json"), rep);
    out.commit();
    std::cout << "test accuracy " << rep["test"]["accuracy"].get<double>() << "\n";
}

void cmd_attack(const ExperimentConfig& cfg) {
    const DatasetManifest manifest = load_manifest(cfg);
    const auto target = resolve_target(cfg, manifest);
    const Loaded data = load_data(manifest);
    const Network net = load_checked_model(cfg, data);
    const AttackBudget budget = resolve(cfg, data);
    const AttackParams params = attack_params(cfg, data, target);

    UapStats stats;
    const Perturbation rho = generate_uap(net, data.train, budget, params, &stats);

    Outputs out(cfg.out);
    const auto uap_path = out("uap.uapf");
    save_perturbation(rho, uap_path);

    ojson rep = report_header("attack", cfg, manifest.class_names.size());
    rep["perturbation_file"] = uap_path.filename().generic_string();
    rep["budget"] = budget_json(budget, params.eps);
    rep["generation"] = {{"passes", stats.passes},
                         {"visits", stats.visits},
                         {"fgsm_steps", stats.fgsm_steps},
                         {"updates", stats.updates}};
    rep["perturbation_norm"] = rho.norm();
    for (const Dataset* d : {&data.train, &data.test}) {
        EvalReport r = evaluate(net, *d, &rho, target);
        r.metadata["seed"] = cfg.seed;
        const std::string tag = to_string(d->split);
        write_file(out("confusion_" + tag + ".csv"), confusion_csv(r.confusion, r.class_names));
        rep[tag] = to_json(r);
    }
    if (cfg.attack.random_control) {
        const Perturbation control = random_uap(net.input_shape(), budget.p, budget.xi, cfg.seed);
        ojson rc;
        rc["norm"] = control.norm();
        for (const Dataset* d : {&data.train, &data.test}) {
            const EvalReport r = evaluate(net, *d, &control, target);
            rc[to_string(d->split)] = {{"metric", r.metric}, {"value", r.value}, {"confusion", confusion_to_json(r.confusion)}};
        }
        rep["random_control"] = std::move(rc);
    }
    export_perturbation_image(rho, out("uap.png"));
    apply_and_export(data.test.images.front(), rho.tensor, data.test.domain, out("adversarial_example.png"));
    write_json(out("attack_report.json"), rep);
    out.commit();

    std::cout << rep["test"]["metric"].get<std::string>() << " test " << rep["test"]["value"].get<double>();
    if (cfg.attack.random_control) std::cout << " (random " << rep["random_control"]["test"]["value"].get<double>() << ")";
    std::cout << "\n";
}

void cmd_eval(const ExperimentConfig& cfg) {
    const DatasetManifest manifest = load_manifest(cfg);
    const auto target = resolve_target(cfg, manifest);
    const Loaded data = load_data(manifest);
    const Network net = load_checked_model(cfg, data);
    std::optional<Perturbation> rho;
    if (!cfg.perturbation.empty()) {
        rho = load_perturbation(cfg.perturbation);
        if (rho->tensor.shape() != net.input_shape())
            throw std::invalid_argument("perturbation shape " + shape_string(rho->tensor.shape()) +
                                        " does not match model input " + shape_string(net.input_shape()));
    }

    Outputs out(cfg.out);
    ojson rep = report_header("eval", cfg, manifest.class_names.size());
    for (const Dataset* d : {&data.train, &data.test}) {
        const EvalReport r = evaluate(net, *d, rho ? &*rho : nullptr, target);
        const std::string tag = to_string(d->split);
        write_file(out("eval_confusion_" + tag + ".csv"), confusion_csv(rho ? r.confusion : r.clean_confusion, r.class_names));
        rep[tag] = to_json(r);
    }
    write_json(out("eval_report.json"), rep);
    out.commit();
    std::cout << "test accuracy " << rep["test"]["accuracy"].get<double>() << "\n";
}

void cmd_retrain(const ExperimentConfig& cfg) {
    const DatasetManifest manifest = load_manifest(cfg);
    const auto target = resolve_target(cfg, manifest);
    const Loaded data = load_data(manifest);
    Network net = load_checked_model(cfg, data);

    RetrainConfig rc;
    rc.n_uaps = cfg.defense.n_uaps;
    rc.extra_epochs = cfg.defense.extra_epochs;
    rc.iterations = cfg.defense.iterations;
    rc.budget = resolve(cfg, data);
    rc.attack = attack_params(cfg, data, target);
    rc.mix_fraction = cfg.defense.mix_fraction;
    rc.learning_rate = cfg.defense.learning_rate.value_or(cfg.train.learning_rate);
    rc.batch_size = cfg.defense.batch_size.value_or(cfg.train.batch_size);
    rc.seed = cfg.seed;
    rc.validate();

    ojson rep = report_header("retrain", cfg, manifest.class_names.size());
    rep["budget"] = budget_json(rc.budget, rc.attack.eps);
    if (rc.iterations > 0) {
        const Perturbation before = generate_uap(net, data.train, rc.budget, rc.attack);
        rep["baseline"] = {{"metric", target ? targeted_success_rate(net, data.test, before, *target)
                                             : fooling_rate(net, data.test, before)},
                           {"clean_accuracy", accuracy(net, data.test)}};
    }

    auto [tuned, history] = adversarial_retrain(std::move(net), data.train, data.test, rc,
                                                [](const RetrainRecord& r, const Network&) {
                                                    std::cout << "iteration " << r.iteration << " metric " << r.metric
                                                              << " clean accuracy " << r.clean_accuracy << std::endl;
                                                });
    if (!cfg.defense.record_wall_time)
        for (auto& r : history.records) r.seconds = 0.0;

    Outputs out(cfg.out);
    save_model(tuned, out("model_retrained.dnet"));
    write_json(out("history.json"), to_json(history));
    write_file(out("history.csv"), history_csv(history));
    rep["history"] = to_json(history);
    write_json(out("retrain_report.json"), rep);
    out.commit();
}

// Command-line overrides, applied on top of the config file.
struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> zeta, xi, eps;
    std::optional<std::string> norm, mode, target, dataset, model, perturbation, out;
    std::optional<std::size_t> imax, epochs, iterations;
    bool random_control = false;
    bool zeta_train_only = false;

    void add_to(CLI::App& app) {
        app.add_option("--config", config, "experiment config (JSON)");
        app.add_option("--seed", seed, "experiment seed");
        app.add_option("--dataset", dataset, "dataset manifest");
        app.add_option("--model", model, "model checkpoint to read");
        app.add_option("--out", out, "output directory");
    }
    void add_attack_to(CLI::App& app) {
        app.add_option("--zeta", zeta, "budget as a fraction of the mean image norm");
        app.add_flag("--zeta-train-only", zeta_train_only, "resolve zeta on the training split only");
        app.add_option("--xi", xi, "absolute budget in pixel units");
        app.add_option("--norm", norm, "1, 2 or inf");
        app.add_option("--eps", eps, "FGSM step relative to the pixel domain width");
        app.add_option("--imax", imax, "passes over the training images");
        app.add_option("--mode", mode, "nontargeted or targeted");
        app.add_option("--target", target, "target class name");
    }

    ExperimentConfig apply() const {
        ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : ExperimentConfig::load(config);
        if (seed) cfg.seed = *seed;
        if (dataset) cfg.dataset = *dataset;
        if (model) cfg.model = *model;
        if (perturbation) cfg.perturbation = *perturbation;
        if (out) cfg.out = *out;
        if (zeta) cfg.attack.zeta = *zeta, cfg.attack.xi.reset();
        if (xi) cfg.attack.xi = *xi, cfg.attack.zeta.reset();
        if (zeta && xi) throw std::invalid_argument("--zeta and --xi are mutually exclusive");
        if (norm) cfg.attack.p = parse_norm(*norm);
        if (eps) cfg.attack.eps = *eps;
        if (imax) cfg.attack.i_max = *imax;
        if (mode) cfg.attack.mode = parse_attack_mode(*mode);
        if (target) cfg.attack.target = *target;
        if (random_control) cfg.attack.random_control = true;
        if (zeta_train_only) cfg.attack.zeta_train_only = true;
        if (epochs) cfg.train.epochs = *epochs;
        if (iterations) cfg.defense.iterations = *iterations;
        cfg.validate();
        return cfg;
    }
};

}  // namespace

std::vector<LayerSpec> desk_architecture(std::size_t num_classes) {
    return {Conv2dSpec{8, 5, 1}, ReluSpec{},           MaxPool2dSpec{2, 2}, FlattenSpec{},
            DenseSpec{32},       ReluSpec{},           DenseSpec{num_classes}, SoftmaxSpec{}};
}

ojson architecture_to_json(std::span<const LayerSpec> specs) {
    auto arr = ojson::array();
    for (const auto& s : specs) {
        arr.push_back(std::visit(
            [](const auto& l) -> ojson {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseSpec>) return {{"type", "dense"}, {"units", l.units}};
                if constexpr (std::is_same_v<T, Conv2dSpec>)
                    return {{"type", "conv2d"}, {"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}};
                if constexpr (std::is_same_v<T, ReluSpec>) return {{"type", "relu"}};
                if constexpr (std::is_same_v<T, MaxPool2dSpec>)
                    return {{"type", "maxpool2d"}, {"size", l.size}, {"stride", l.stride}};
                if constexpr (std::is_same_v<T, FlattenSpec>) return {{"type", "flatten"}};
                if constexpr (std::is_same_v<T, SoftmaxSpec>) return {{"type", "softmax"}};
            },
            s));
    }
    return arr;
}

std::vector<LayerSpec> architecture_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("architecture must be a nonempty array of layers");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& l = j[i];
        const std::string where = "architecture[" + std::to_string(i) + "]";
        if (!l.is_object() || !l.contains("type")) throw std::invalid_argument(where + " needs a 'type'");
        const auto type = field<std::string>(l, "type", where);
        if (type == "dense") {
            check_keys(l, where, {"type", "units"});
            specs.push_back(DenseSpec{count_field(l, "units", where)});
        } else if (type == "conv2d") {
            check_keys(l, where, {"type", "out_channels", "kernel", "stride"});
            Conv2dSpec c{count_field(l, "out_channels", where)};
            if (l.contains("kernel")) c.kernel = count_field(l, "kernel", where);
            if (l.contains("stride")) c.stride = count_field(l, "stride", where);
            specs.push_back(c);
        } else if (type == "relu") {
            check_keys(l, where, {"type"});
            specs.push_back(ReluSpec{});
        } else if (type == "maxpool2d") {
            check_keys(l, where, {"type", "size", "stride"});
            MaxPool2dSpec m;
            if (l.contains("size")) m.size = count_field(l, "size", where);
            m.stride = l.contains("stride") ? count_field(l, "stride", where) : m.size;
            specs.push_back(m);
        } else if (type == "flatten") {
            check_keys(l, where, {"type"});
            specs.push_back(FlattenSpec{});
        } else if (type == "softmax") {
            check_keys(l, where, {"type"});
            specs.push_back(SoftmaxSpec{});
        } else {
            throw std::invalid_argument(where + " has unknown type '" + type + "'");
        }
    }
    return specs;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    check_keys(j, "config", {"seed", "dataset", "model", "perturbation", "architecture", "train", "attack", "defense", "out"});
    ExperimentConfig c;
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw std::invalid_argument("config.seed must be a nonnegative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("dataset")) c.dataset = path_field(j, "dataset", base_dir);
    if (j.contains("model")) c.model = path_field(j, "model", base_dir);
    if (j.contains("perturbation")) c.perturbation = path_field(j, "perturbation", base_dir);
    if (j.contains("out")) c.out = path_field(j, "out", base_dir);
    if (j.contains("architecture") && !j["architecture"].is_null()) c.architecture = architecture_from_json(j["architecture"]);

    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, "train", {"epochs", "learning_rate", "batch_size", "class_weights"});
        if (t.contains("epochs")) c.train.epochs = count_field(t, "epochs", "train");
        if (t.contains("learning_rate")) c.train.learning_rate = field<double>(t, "learning_rate", "train");
        if (t.contains("batch_size")) c.train.batch_size = count_field(t, "batch_size", "train");
        if (t.contains("class_weights")) {
            const auto& w = t["class_weights"];
            if (w.is_string()) c.train.class_weights = w.get<std::string>();
            else c.train.class_weights = field<std::vector<double>>(t, "class_weights", "train");
        }
    }
    if (j.contains("attack")) {
        const auto& a = j["attack"];
        check_keys(a, "attack", {"mode", "target", "norm", "zeta", "zeta_reference", "xi", "eps", "i_max", "random_control"});
        if (a.contains("mode")) c.attack.mode = parse_attack_mode(field<std::string>(a, "mode", "attack"));
        if (a.contains("target") && !a["target"].is_null()) c.attack.target = field<std::string>(a, "target", "attack");
        if (a.contains("norm")) {
            const auto& n = a["norm"];
            c.attack.p = parse_norm(n.is_string() ? n.get<std::string>() : n.dump());
        }
        const bool has_zeta = a.contains("zeta") && !a["zeta"].is_null();
        const bool has_xi = a.contains("xi") && !a["xi"].is_null();
        if (has_zeta && has_xi) throw std::invalid_argument("attack.zeta and attack.xi are mutually exclusive");
        if (has_xi) c.attack.xi = field<double>(a, "xi", "attack"), c.attack.zeta.reset();
        if (has_zeta) c.attack.zeta = field<double>(a, "zeta", "attack");
        if (a.contains("zeta_reference")) {
            const auto ref = field<std::string>(a, "zeta_reference", "attack");
            if (ref != "pooled" && ref != "train")
                throw std::invalid_argument("attack.zeta_reference must be 'pooled' or 'train'");
            c.attack.zeta_train_only = ref == "train";
        }
        if (a.contains("eps")) c.attack.eps = field<double>(a, "eps", "attack");
        if (a.contains("i_max")) c.attack.i_max = count_field(a, "i_max", "attack");
        if (a.contains("random_control")) c.attack.random_control = field<bool>(a, "random_control", "attack");
    }
    if (j.contains("defense")) {
        const auto& d = j["defense"];
        check_keys(d, "defense", {"n_uaps", "extra_epochs", "iterations", "mix_fraction", "learning_rate", "batch_size",
                                  "record_wall_time"});
        if (d.contains("n_uaps")) c.defense.n_uaps = count_field(d, "n_uaps", "defense");
        if (d.contains("extra_epochs")) c.defense.extra_epochs = count_field(d, "extra_epochs", "defense");
        if (d.contains("iterations")) c.defense.iterations = count_field(d, "iterations", "defense");
        if (d.contains("mix_fraction")) c.defense.mix_fraction = field<double>(d, "mix_fraction", "defense");
        if (d.contains("learning_rate") && !d["learning_rate"].is_null())
            c.defense.learning_rate = field<double>(d, "learning_rate", "defense");
        if (d.contains("batch_size") && !d["batch_size"].is_null())
            c.defense.batch_size = count_field(d, "batch_size", "defense");
        if (d.contains("record_wall_time")) c.defense.record_wall_time = field<bool>(d, "record_wall_time", "defense");
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    const auto bytes = read_file(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON", e.byte > 0 ? e.byte - 1 : 0);
    }
    try {
        return from_json(j, path.parent_path());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

ojson ExperimentConfig::to_json(std::optional<std::size_t> num_classes) const {
    ojson j;
    j["seed"] = seed;
    j["dataset"] = path_json(dataset);
    j["model"] = path_json(model);
    j["perturbation"] = path_json(perturbation);
    if (architecture) j["architecture"] = architecture_to_json(*architecture);
    else if (num_classes) j["architecture"] = architecture_to_json(desk_architecture(*num_classes));
    else j["architecture"] = nullptr;

    ojson t;
    t["epochs"] = train.epochs;
    t["learning_rate"] = train.learning_rate;
    t["batch_size"] = train.batch_size;
    std::visit([&](const auto& w) { t["class_weights"] = w; }, train.class_weights);
    j["train"] = std::move(t);

    ojson a;
    a["mode"] = uap::to_string(attack.mode);
    a["target"] = optional_json(attack.target);
    a["norm"] = uap::to_string(attack.p);
    a["zeta"] = optional_json(attack.zeta);
    a["zeta_reference"] = attack.zeta_train_only ? "train" : "pooled";
    a["xi"] = optional_json(attack.xi);
    a["eps"] = attack.eps;
    a["i_max"] = attack.i_max;
    a["random_control"] = attack.random_control;
    j["attack"] = std::move(a);

    ojson d;
    d["n_uaps"] = defense.n_uaps;
    d["extra_epochs"] = defense.extra_epochs;
    d["iterations"] = defense.iterations;
    d["mix_fraction"] = defense.mix_fraction;
    d["learning_rate"] = defense.learning_rate.value_or(train.learning_rate);
    d["batch_size"] = defense.batch_size.value_or(train.batch_size);
    d["record_wall_time"] = defense.record_wall_time;
    j["defense"] = std::move(d);

    j["out"] = path_json(out);
    return j;
}

void ExperimentConfig::validate() const {
    if (attack.mode == AttackMode::Targeted && !attack.target)
        throw std::invalid_argument("targeted attack needs a target class (attack.target or --target)");
    if (attack.mode == AttackMode::Nontargeted && attack.target)
        throw std::invalid_argument("a target class is only valid with --mode targeted");
    if (attack.zeta.has_value() == attack.xi.has_value())
        throw std::invalid_argument("exactly one of attack.zeta and attack.xi must be set");
    if (attack.zeta && !(*attack.zeta > 0.0 && *attack.zeta <= 1.0)) throw std::invalid_argument("zeta must lie in (0, 1]");
    if (attack.xi && !(*attack.xi > 0.0)) throw std::invalid_argument("xi must be positive");
    if (!(attack.eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (!(train.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
    if (train.batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
    if (const auto* named = std::get_if<std::string>(&train.class_weights);
        named && *named != "inverse_frequency" && *named != "uniform")
        throw std::invalid_argument("train.class_weights must be 'inverse_frequency', 'uniform' or a list");
    if (defense.n_uaps == 0) throw std::invalid_argument("defense.n_uaps must be at least 1");
    if (defense.extra_epochs == 0) throw std::invalid_argument("defense.extra_epochs must be at least 1");
    if (!(defense.mix_fraction > 0.0 && defense.mix_fraction < 1.0))
        throw std::invalid_argument("defense.mix_fraction must lie in (0, 1)");
    if (out.empty()) throw std::invalid_argument("output directory must not be empty");
}

int run(int argc, const char* const* argv) {
    CLI::App app{"Universal adversarial perturbations: train, attack, evaluate and harden small image classifiers"};
    app.name("uapctl");
    app.require_subcommand(1);

    Overrides o;
    auto* make = app.add_subcommand("make-digits", "write the synthetic desk digit corpus (IDX + manifest)");
    make->add_option("--seed", o.seed, "corpus seed");
    make->add_option("--out", o.out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train a classifier and write a checkpoint");
    o.add_to(*train_cmd);
    train_cmd->add_option("--epochs", o.epochs, "training epochs");

    auto* attack_cmd = app.add_subcommand("attack", "generate a UAP on the training split and evaluate it");
    o.add_to(*attack_cmd);
    o.add_attack_to(*attack_cmd);
    attack_cmd->add_flag("--random-control", o.random_control, "also evaluate a norm-matched random perturbation");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model, optionally under a saved perturbation");
    o.add_to(*eval_cmd);
    eval_cmd->add_option("--perturbation", o.perturbation, "UAPF file to apply");
    eval_cmd->add_option("--mode", o.mode, "report R_s when targeted");
    eval_cmd->add_option("--target", o.target, "target class name");

    auto* retrain_cmd = app.add_subcommand("retrain", "adversarial retraining with UAPs");
    o.add_to(*retrain_cmd);
    o.add_attack_to(*retrain_cmd);
    retrain_cmd->add_option("--iterations", o.iterations, "retraining iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const ExperimentConfig cfg = o.apply();
        if (make->parsed()) cmd_make_digits(cfg);
        else if (train_cmd->parsed()) cmd_train(cfg);
        else if (attack_cmd->parsed()) cmd_attack(cfg);
        else if (eval_cmd->parsed()) cmd_eval(cfg);
        else if (retrain_cmd->parsed()) cmd_retrain(cfg);
    } catch (const std::exception& e) {
        std::cerr << "uapctl: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace uap::cli

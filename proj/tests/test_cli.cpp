#include "support.hpp"

#include "uap/binary_io.hpp"
#include "uap/cli.hpp"
#include "uap/synthetic_digits.hpp"

#include <doctest.h>

#include <fstream>

using namespace uap;
using namespace uap::test;
using nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "uapctl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

// Small corpus and a small network so every command runs in well under a second.
struct Workspace {
    fs::path dir = temp_dir("cli");
    fs::path config = dir / "config.json";

    Workspace() {
        write_synthetic_corpus(dir / "digits",
                               SyntheticDigitsOptions{{3, 5, 8}, {"three", "five", "eight"}, {20, 20, 4}, {6, 6, 3}, 9});
        const json cfg = {
            {"seed", 5},
            {"dataset", "digits/manifest.json"},
            {"model", "trained/model.dnet"},
            {"architecture", json::array({{{"type", "conv2d"}, {"out_channels", 2}, {"kernel", 5}, {"stride", 3}},
                                          {{"type", "relu"}},
                                          {{"type", "flatten"}},
                                          {{"type", "dense"}, {"units", 3}},
                                          {{"type", "softmax"}}})},
            {"train", {{"epochs", 2}, {"learning_rate", 0.05}, {"batch_size", 8}}},
            {"attack", {{"zeta", 0.1}, {"eps", 0.01}, {"i_max", 2}}},
            {"defense", {{"n_uaps", 2}, {"extra_epochs", 1}, {"iterations", 2}}},
        };
        write_file(config, cfg.dump(2));
    }
    ~Workspace() { fs::remove_all(dir); }

    std::string p(const std::string& rel) const { return (dir / rel).string(); }

    void train() { REQUIRE(run_cli({"train", "--config", config.string(), "--out", p("trained")}) == 0); }
};

}  // namespace

TEST_CASE("train writes a checkpoint and a report") {
    Workspace ws;
    ws.train();
    const auto bytes = read_file(ws.dir / "trained" / "model.dnet");
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DNET");
    const json rep = read_json(ws.dir / "trained" / "train_report.json");
    CHECK(rep["command"] == "train");
    CHECK(rep["seed"] == 5);
    CHECK(rep["config"]["train"]["epochs"] == 2);
    CHECK(rep["config"]["attack"]["i_max"] == 2);
    CHECK(rep["streams"].contains("rule"));
    CHECK(rep["test"].contains("accuracy"));

    REQUIRE(run_cli({"train", "--config", ws.config.string(), "--out", ws.p("again")}) == 0);
    CHECK(read_file(ws.dir / "again" / "model.dnet") == bytes);
}

TEST_CASE("zero epochs reports the untrained accuracy") {
    Workspace ws;
    REQUIRE(run_cli({"train", "--config", ws.config.string(), "--epochs", "0", "--out", ws.p("untrained")}) == 0);
    const json rep = read_json(ws.dir / "untrained" / "train_report.json");
    CHECK(rep["test"]["accuracy"] == rep["untrained_test_accuracy"]);
}

TEST_CASE("attack reports R_f on both splits and the random control") {
    Workspace ws;
    ws.train();
    REQUIRE(run_cli({"attack", "--config", ws.config.string(), "--out", ws.p("attack"), "--random-control"}) == 0);
    const fs::path out = ws.dir / "attack";
    for (const char* f : {"uap.uapf", "attack_report.json", "confusion_train.csv", "confusion_test.csv", "uap.png",
                          "adversarial_example.png"})
        CHECK(fs::exists(out / f));
    const json rep = read_json(out / "attack_report.json");
    CHECK(rep["train"]["metric"] == "R_f");
    CHECK(rep["test"]["metric"] == "R_f");
    CHECK(rep["random_control"]["test"]["metric"] == "R_f");
    CHECK(rep["random_control"]["norm"].get<double>() == doctest::Approx(rep["budget"]["xi"].get<double>()));
    CHECK(rep["test"].contains("dominant_class_name"));

    REQUIRE(run_cli({"attack", "--config", ws.config.string(), "--out", ws.p("plain")}) == 0);
    CHECK_FALSE(read_json(ws.dir / "plain" / "attack_report.json").contains("random_control"));
    CHECK(read_file(ws.dir / "plain" / "uap.uapf") == read_file(out / "uap.uapf"));

    REQUIRE(run_cli({"eval", "--config", ws.config.string(), "--perturbation", (out / "uap.uapf").string(), "--out",
                     ws.p("eval")}) == 0);
    const json ev = read_json(ws.dir / "eval" / "eval_report.json");
    CHECK(ev["test"]["value"] == rep["test"]["value"]);
}

TEST_CASE("targeted attack without a target fails before writing anything") {
    Workspace ws;
    ws.train();
    CHECK(run_cli({"attack", "--config", ws.config.string(), "--mode", "targeted", "--out", ws.p("t")}) == 1);
    CHECK_FALSE(fs::exists(ws.dir / "t"));
    CHECK(run_cli({"attack", "--config", ws.config.string(), "--mode", "targeted", "--target", "eight", "--out",
                   ws.p("t")}) == 0);
    const json rep = read_json(ws.dir / "t" / "attack_report.json");
    CHECK(rep["test"]["metric"] == "R_s");
    CHECK(rep["test"]["target_name"] == "eight");
    CHECK(run_cli({"attack", "--config", ws.config.string(), "--mode", "targeted", "--target", "nine", "--out",
                   ws.p("u")}) == 1);
}

TEST_CASE("retrain history rows and determinism") {
    Workspace ws;
    ws.train();
    // Same output directory both times, since reports embed it.
    REQUIRE(run_cli({"retrain", "--config", ws.config.string(), "--out", ws.p("r")}) == 0);
    fs::rename(ws.dir / "r", ws.dir / "r1");
    REQUIRE(run_cli({"retrain", "--config", ws.config.string(), "--out", ws.p("r")}) == 0);
    fs::rename(ws.dir / "r", ws.dir / "r2");
    const json h = read_json(ws.dir / "r1" / "history.json");
    CHECK(h["records"].size() == 2);
    for (const char* f : {"history.json", "history.csv", "model_retrained.dnet", "retrain_report.json"})
        CHECK(read_file(ws.dir / "r1" / f) == read_file(ws.dir / "r2" / f));

    REQUIRE(run_cli({"retrain", "--config", ws.config.string(), "--iterations", "0", "--out", ws.p("r0")}) == 0);
    CHECK(read_file(ws.dir / "r0" / "history.csv").size() == std::string("iteration,metric,clean_accuracy,seconds\n").size());
    CHECK(read_file(ws.dir / "r0" / "model_retrained.dnet") == read_file(ws.dir / "trained" / "model.dnet"));
}

TEST_CASE("usage and config errors") {
    Workspace ws;
    CHECK(run_cli({"train", "--no-such-flag"}) == 2);
    CHECK(run_cli({}) == 2);
    json cfg = read_json(ws.config);
    cfg["attack"]["typo"] = 1;
    write_file(ws.dir / "bad.json", cfg.dump());
    CHECK(run_cli({"train", "--config", ws.p("bad.json"), "--out", ws.p("x")}) == 1);
    CHECK_FALSE(fs::exists(ws.dir / "x"));
    CHECK(run_cli({"train", "--config", ws.config.string(), "--seed", "-3", "--out", ws.p("y")}) != 0);
    CHECK(run_cli({"attack", "--config", ws.config.string(), "--norm", "3", "--out", ws.p("z")}) != 0);
}

TEST_CASE("config round trips through json with defaults materialised") {
    const auto c = cli::ExperimentConfig::from_json(json::parse(R"({"seed": 3, "dataset": "m.json"})"), "/base");
    CHECK(c.dataset == fs::path("/base/m.json"));
    const auto j = c.to_json(3);
    CHECK(j["attack"]["norm"] == "inf");
    CHECK(j["attack"]["i_max"] == 15);
    CHECK(j["defense"]["n_uaps"] == 10);
    CHECK(j["architecture"].size() == cli::desk_architecture(3).size());
    const auto specs = cli::architecture_from_json(cli::architecture_to_json(cli::desk_architecture(3)));
    CHECK(specs.size() == 8);
}

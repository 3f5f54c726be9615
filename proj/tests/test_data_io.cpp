#include "support.hpp"

#include "uap/binary_io.hpp"
#include "uap/data_io.hpp"
#include "uap/synthetic_digits.hpp"

#include <doctest.h>

#include <fstream>

using namespace uap;
using namespace uap::test;

namespace {

Raster gray(std::size_t w, std::size_t h, std::uint8_t fill) { return Raster{w, h, 1, std::vector<std::uint8_t>(w * h, fill)}; }

DatasetManifest idx_manifest(const fs::path& dir) {
    DatasetManifest m;
    m.format = ManifestFormat::Idx;
    m.class_names = {"a", "b"};
    m.idx_labels = {4, 7};
    m.train.images = dir / "img";
    m.train.labels = dir / "lbl";
    return m;
}

void write_tree(const fs::path& root, const std::map<std::string, std::size_t>& sizes) {
    for (const auto& [cls, n] : sizes) {
        fs::create_directories(root / cls);
        for (std::size_t i = 0; i < n; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%03zu.pgm", i);
            write_pgm(root / cls / name, gray(2, 2, static_cast<std::uint8_t>(i)));
        }
    }
}

}  // namespace

TEST_CASE("IDX pair with four images") {
    const auto dir = temp_dir("idx");
    IdxArray images{{4, 2, 3}, {}};
    for (std::uint8_t i = 0; i < 24; ++i) images.data.push_back(static_cast<std::uint8_t>(i * 10));
    write_idx(dir / "img", images);
    write_idx(dir / "lbl", IdxArray{{4}, {7, 4, 4, 7}});
    const Dataset d = load_dataset(idx_manifest(dir), Split::Train);
    CHECK(d.size() == 4);
    CHECK(d.image_shape()[0] == 2);
    CHECK(d.image_shape()[1] == 3);
    CHECK(d.labels == std::vector<ClassId>{1, 0, 0, 1});
    CHECK(d.images[1][0] == 60.0);
    CHECK(d.images[3][5] == 230.0);

    // Raw labels outside the manifest are skipped.
    write_idx(dir / "lbl", IdxArray{{4}, {7, 9, 4, 7}});
    CHECK(load_dataset(idx_manifest(dir), Split::Train).size() == 3);
    fs::remove_all(dir);
}

TEST_CASE("malformed IDX headers report offsets") {
    const auto good = encode_idx(IdxArray{{2, 2}, {1, 2, 3, 4}});
    CHECK(parse_idx(good).data == std::vector<std::uint8_t>{1, 2, 3, 4});

    auto offset_of = [](std::vector<std::uint8_t> bytes) -> std::optional<std::size_t> {
        try {
            parse_idx(bytes);
        } catch (const FormatError& e) {
            return e.offset();
        }
        return std::nullopt;
    };
    auto bad = good;
    bad[0] = 1;
    CHECK(offset_of(bad) == 0u);
    bad = good;
    bad[2] = 0x0D;
    CHECK(offset_of(bad) == 2u);
    bad = good;
    bad.pop_back();
    CHECK(offset_of(bad) == bad.size());
    bad = good;
    bad.push_back(0);
    CHECK(offset_of(bad) == good.size());
    CHECK(offset_of({0, 0}) == 2u);
}

TEST_CASE("missing files and unknown classes are rejected with their path") {
    const auto dir = temp_dir("missing");
    try {
        load_dataset(idx_manifest(dir), Split::Train);
        FAIL("expected rejection");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find((dir / "img").string()) != std::string::npos);
    }

    write_tree(dir / "tree", {{"a", 1}, {"zebra", 1}});
    DatasetManifest m;
    m.format = ManifestFormat::ImageDir;
    m.class_names = {"a", "b"};
    m.train.root = dir / "tree";
    try {
        load_dataset(m, Split::Train);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("zebra") != std::string::npos);
    }

    write_file(dir / "list.csv", std::string("path,class_name\ntree/a/000.pgm,horse\n"));
    m.format = ManifestFormat::CsvManifest;
    m.train.csv = dir / "list.csv";
    CHECK_THROWS_WITH_AS(load_dataset(m, Split::Train), doctest::Contains("horse"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("image directory counts and class caps") {
    const auto dir = temp_dir("tree");
    write_tree(dir, {{"a", 100}, {"b", 100}, {"c", 5}});
    DatasetManifest m;
    m.format = ManifestFormat::ImageDir;
    m.class_names = {"a", "b", "c"};
    m.train.root = dir;
    const Dataset all = load_dataset(m, Split::Train);
    CHECK(all.size() == 205);
    CHECK(all.num_classes() == 3);
    CHECK(all.class_counts() == std::vector<std::size_t>{100, 100, 5});

    m.train.caps["c"] = 2;
    const Dataset capped = load_dataset(m, Split::Train);
    CHECK(capped.size() == 202);
    CHECK(capped.class_counts()[2] == 2);
    const Dataset again = load_dataset(m, Split::Train);
    CHECK(again.labels == capped.labels);
    for (std::size_t i = 0; i < capped.size(); ++i) CHECK(again.images[i] == capped.images[i]);
    // Lexicographic order: the first two of class c are 000 and 001.
    std::vector<double> kept;
    for (std::size_t i = 0; i < capped.size(); ++i)
        if (capped.labels[i] == 2) kept.push_back(capped.images[i][0]);
    CHECK(kept == std::vector<double>{0.0, 1.0});
    fs::remove_all(dir);
}

TEST_CASE("csv manifest loads in path order") {
    const auto dir = temp_dir("csv");
    write_tree(dir, {{"x", 3}});
    write_file(dir / "list.csv", std::string("path,class_name\nx/002.pgm,q\nx/000.pgm,p\nx/001.pgm,q\n"));
    DatasetManifest m;
    m.format = ManifestFormat::CsvManifest;
    m.class_names = {"p", "q"};
    m.train.csv = dir / "list.csv";
    const Dataset d = load_dataset(m, Split::Train);
    REQUIRE(d.size() == 3);
    CHECK(d.labels == std::vector<ClassId>{0, 1, 1});
    CHECK(d.images[0][0] == 0.0);
    CHECK(d.images[2][0] == 2.0);
    fs::remove_all(dir);
}

TEST_CASE("manifest json round trip") {
    const auto dir = temp_dir("manifest");
    const auto path = write_synthetic_corpus(dir, SyntheticDigitsOptions{{1, 7}, {"one", "seven"}, {3, 2}, {1, 1}, 5});
    const DatasetManifest m = DatasetManifest::load(path);
    const Dataset train = load_dataset(m, Split::Train);
    CHECK(train.size() == 5);
    CHECK(train.class_counts() == std::vector<std::size_t>{3, 2});
    CHECK(load_dataset(m, Split::Test).size() == 2);
    const auto again = DatasetManifest::from_json(m.to_json(), dir);
    CHECK(again.to_json() == m.to_json());
    CHECK_THROWS_AS(DatasetManifest::from_json(nlohmann::json::parse(R"({"format":"idx","classes":["a","a"],"train":{}})"), dir),
                    std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("PGM and PNG round trips") {
    const auto dir = temp_dir("raster");
    Raster r{5, 3, 1, {}};
    for (std::uint8_t i = 0; i < 15; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 17));
    for (const char* ext : {".pgm", ".png"}) {
        write_image(dir / (std::string("g") + ext), r);
        const Raster back = read_image(dir / (std::string("g") + ext));
        CHECK(back.width == 5);
        CHECK(back.height == 3);
        CHECK(back.pixels == r.pixels);
    }
    Raster rgb{2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
    write_png(dir / "c.png", rgb);
    CHECK(read_png(dir / "c.png").pixels == rgb.pixels);
    CHECK(read_png(dir / "c.png").channels == 3);
    CHECK_THROWS(read_image(dir / "nothing.png"));
    CHECK_THROWS(write_image(dir / "no" / "such" / "dir.pgm", r));
    fs::remove_all(dir);
}

TEST_CASE("perturbation images are min-max scaled") {
    Tensor rho({2, 3, 1});
    const double vals[6] = {-4.74, 0.0, 4.74, 1.0, -2.0, 3.5};
    for (std::size_t i = 0; i < 6; ++i) rho[i] = vals[i];
    const Raster r = perturbation_raster(rho);
    CHECK(r.width == 3);
    CHECK(r.height == 2);
    CHECK(*std::min_element(r.pixels.begin(), r.pixels.end()) == 0);
    CHECK(*std::max_element(r.pixels.begin(), r.pixels.end()) == 255);
    CHECK(r.pixels[1] == 128);  // 0 sits halfway

    Tensor flat({2, 2, 1});
    for (std::size_t i = 0; i < 4; ++i) flat[i] = 0.3;
    CHECK(perturbation_raster(flat).pixels == std::vector<std::uint8_t>(4, 128));

    const auto dir = temp_dir("pert");
    export_perturbation_image(Perturbation{rho, {Norm::Linf, 4.74, {}}, Provenance::UapNontargeted}, dir / "p.png");
    const Raster back = read_png(dir / "p.png");
    CHECK(back.pixels[0] == 0);
    CHECK(back.pixels[2] == 255);
    fs::remove_all(dir);
}

TEST_CASE("adversarial export clips in native units") {
    const auto dir = temp_dir("adv");
    Tensor x({1, 4, 1});
    x[0] = 255.0;
    x[1] = 0.0;
    x[2] = 100.0;
    x[3] = 200.0;
    apply_and_export(x, Tensor::zeros({1, 4, 1}), {}, dir / "same.pgm");
    CHECK(tensor_from_raster(read_pgm(dir / "same.pgm")) == x);

    Tensor rho({1, 4, 1});
    rho[0] = 30.0;
    rho[1] = -30.0;
    rho[2] = 5.0;
    rho[3] = -5.0;
    apply_and_export(x, rho, {}, dir / "adv.png");
    CHECK(read_png(dir / "adv.png").pixels == std::vector<std::uint8_t>{255, 0, 105, 195});
    CHECK_THROWS_AS(apply_and_export(x, Tensor::zeros({4}), {}, dir / "bad.png"), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("exported adversarial images classify like the in-memory ones") {
    const auto dir = temp_dir("roundtrip");
    Rng rng(12, "export-ingest");
    const Network net = Network::build({6, 6, 1}, std::vector<LayerSpec>{Conv2dSpec{3, 3, 1}, ReluSpec{}, FlattenSpec{},
                                                                        DenseSpec{3}, SoftmaxSpec{}},
                                       3);
    Tensor rho({6, 6, 1});
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::round(rng.uniform(-40.0, 40.0));
    std::string csv = "path,class_name\n";
    std::vector<Tensor> xs;
    for (int i = 0; i < 20; ++i) {
        Tensor x({6, 6, 1});
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::round(rng.uniform(0.0, 255.0));
        char name[32];
        std::snprintf(name, sizeof name, "adv%02d.png", i);
        apply_and_export(x, rho, {}, dir / name);
        csv += std::string(name) + ",k\n";
        xs.push_back(x);
    }
    write_file(dir / "list.csv", csv);
    DatasetManifest m;
    m.format = ManifestFormat::CsvManifest;
    m.class_names = {"k", "l", "m"};
    m.train.csv = dir / "list.csv";
    const Dataset back = load_dataset(m, Split::Train);
    REQUIRE(back.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        const Tensor in_memory = perturb(xs[i], rho, {});
        CHECK(back.images[i] == in_memory);
        CHECK(predict(net, back.images[i]) == predict(net, in_memory));
    }
    fs::remove_all(dir);
}

TEST_CASE("synthetic corpus is deterministic") {
    const SyntheticDigitsOptions o{{3, 5, 8}, {"three", "five", "eight"}, {4, 4, 2}, {2, 2, 1}, 77};
    const Dataset a = synthesize_digits(o, Split::Train), b = synthesize_digits(o, Split::Train);
    CHECK(a.labels == b.labels);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.images[i] == b.images[i]);
    CHECK(a.image_shape() == Shape{28, 28, 1});
    const auto preset = desk_digits_preset();
    const double minority = static_cast<double>(preset.train_counts[2]) /
                            static_cast<double>(preset.train_counts[0] + preset.train_counts[1] + preset.train_counts[2]);
    CHECK(minority == doctest::Approx(0.01));
}

#include "uap/data_io.hpp"

#include "uap/binary_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace uap {

std::string to_string(ManifestFormat f) {
    switch (f) {
        case ManifestFormat::Idx: return "idx";
        case ManifestFormat::ImageDir: return "image_dir";
        case ManifestFormat::CsvManifest: return "csv_manifest";
    }
    return "unknown";
}

ManifestFormat parse_manifest_format(const std::string& s) {
    if (s == "idx") return ManifestFormat::Idx;
    if (s == "image_dir") return ManifestFormat::ImageDir;
    if (s == "csv_manifest") return ManifestFormat::CsvManifest;
    throw std::invalid_argument("unknown dataset format '" + s + "' (expected idx, image_dir or csv_manifest)");
}

// --- manifest ----------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

SplitSource split_from_json(const nlohmann::json& j, const fs::path& base) {
    SplitSource s;
    if (j.contains("images")) s.images = resolve(base, j.at("images").get<std::string>());
    if (j.contains("labels")) s.labels = resolve(base, j.at("labels").get<std::string>());
    if (j.contains("root")) s.root = resolve(base, j.at("root").get<std::string>());
    if (j.contains("csv")) s.csv = resolve(base, j.at("csv").get<std::string>());
    if (j.contains("caps"))
        for (const auto& [name, cap] : j.at("caps").items()) s.caps[name] = cap.get<std::size_t>();
    return s;
}

nlohmann::ordered_json split_to_json(const SplitSource& s) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    if (!s.images.empty()) j["images"] = s.images.string();
    if (!s.labels.empty()) j["labels"] = s.labels.string();
    if (!s.root.empty()) j["root"] = s.root.string();
    if (!s.csv.empty()) j["csv"] = s.csv.string();
    if (!s.caps.empty()) j["caps"] = s.caps;
    return j;
}

}  // namespace

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    DatasetManifest m;
    try {
        m.format = parse_manifest_format(j.at("format").get<std::string>());
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("idx_labels")) {
            m.idx_labels = j.at("idx_labels").get<std::vector<std::int64_t>>();
        } else {
            for (std::size_t i = 0; i < m.class_names.size(); ++i) m.idx_labels.push_back(static_cast<std::int64_t>(i));
        }
        if (j.contains("pixel_domain")) {
            const auto d = j.at("pixel_domain").get<std::vector<double>>();
            if (d.size() != 2) throw std::invalid_argument("pixel_domain must be [lo, hi]");
            m.domain = {d[0], d[1]};
        }
        m.train = split_from_json(j.at("train"), base_dir);
        if (j.contains("test")) m.test = split_from_json(j.at("test"), base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed dataset manifest: ") + e.what());
    }
    m.validate();
    return m;
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

nlohmann::ordered_json DatasetManifest::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = uap::to_string(format);
    j["classes"] = class_names;
    if (format == ManifestFormat::Idx) j["idx_labels"] = idx_labels;
    j["pixel_domain"] = {domain.lo, domain.hi};
    j["train"] = split_to_json(train);
    j["test"] = split_to_json(test);
    return j;
}

void DatasetManifest::validate() const {
    if (class_names.empty()) throw std::invalid_argument("dataset manifest declares no classes");
    std::set<std::string> names(class_names.begin(), class_names.end());
    if (names.size() != class_names.size()) throw std::invalid_argument("dataset manifest has duplicate class names");
    if (format == ManifestFormat::Idx) {
        if (idx_labels.size() != class_names.size())
            throw std::invalid_argument("idx_labels must list one raw label per class");
        std::set<std::int64_t> raw(idx_labels.begin(), idx_labels.end());
        if (raw.size() != idx_labels.size()) throw std::invalid_argument("idx_labels has duplicates");
    }
    if (!(domain.hi > domain.lo)) throw std::invalid_argument("pixel domain must have hi > lo");
    for (const auto* s : {&train, &test})
        for (const auto& [name, cap] : s->caps)
            if (!names.contains(name)) throw std::invalid_argument("cap given for unknown class name '" + name + "'");
}

// --- IDX -----------------------------------------------------------------------

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("IDX header truncated", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("IDX magic must start with two zero bytes", 0);
    if (bytes[2] != 0x08) throw FormatError("unsupported IDX element type 0x" + std::to_string(bytes[2]) + " (need 0x08)", 2);
    const std::size_t rank = bytes[3];
    if (rank == 0) throw FormatError("IDX rank is zero", 3);
    if (bytes.size() < 4 + 4 * rank) throw FormatError("IDX dimension header truncated", bytes.size());
    IdxArray a;
    std::size_t count = 1;
    for (std::size_t d = 0; d < rank; ++d) {
        const std::size_t at = 4 + 4 * d;
        const std::uint32_t v = (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
                                (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
        a.dims.push_back(v);
        count *= v;
    }
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() - header < count)
        throw FormatError("IDX payload truncated: need " + std::to_string(count) + " bytes, have " +
                              std::to_string(bytes.size() - header),
                          bytes.size());
    if (bytes.size() - header > count) throw FormatError("trailing bytes after IDX payload", header + count);
    a.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return a;
}

IdxArray read_idx(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return parse_idx(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string(), e);
    }
}

std::vector<std::uint8_t> encode_idx(const IdxArray& a) {
    std::size_t count = 1;
    for (auto d : a.dims) count *= d;
    if (a.dims.empty() || a.dims.size() > 255 || count != a.data.size())
        throw std::invalid_argument("IDX dims do not match payload size");
    std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(a.dims.size())};
    for (auto d : a.dims)
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
    out.insert(out.end(), a.data.begin(), a.data.end());
    return out;
}

void write_idx(const fs::path& path, const IdxArray& array) { write_file(path, encode_idx(array)); }

// --- raster images -------------------------------------------------------------

namespace {

std::string lower_extension(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

void check_raster(const Raster& r) {
    if (r.width == 0 || r.height == 0 || (r.channels != 1 && r.channels != 3) ||
        r.pixels.size() != r.width * r.height * r.channels)
        throw std::invalid_argument("raster has inconsistent dimensions");
}

}  // namespace

Raster read_pgm(const fs::path& path) {
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) {
        skip_space();
        const std::size_t start = pos;
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        if (pos == start) throw FormatError(path.string() + ": expected PGM " + what, start);
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError(path.string() + ": not a binary PGM (P5)", 0);
    pos = 2;
    Raster r;
    r.width = read_uint("width");
    r.height = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit PGM is supported", pos);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(path.string() + ": malformed PGM header", pos);
    ++pos;
    const std::size_t n = r.width * r.height;
    if (r.width == 0 || r.height == 0) throw FormatError(path.string() + ": zero-sized PGM", pos);
    if (bytes.size() - pos < n) throw FormatError(path.string() + ": PGM pixel data truncated", bytes.size());
    r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    if (maxval != 255)
        for (auto& p : r.pixels) p = static_cast<std::uint8_t>(std::lround(255.0 * p / static_cast<double>(maxval)));
    return r;
}

void write_pgm(const fs::path& path, const Raster& raster) {
    check_raster(raster);
    if (raster.channels != 1) throw std::invalid_argument("PGM output needs a single-channel raster");
    const std::string header = "P5\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), raster.pixels.begin(), raster.pixels.end());
    write_file(path, out);
}

Raster read_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    const auto bytes = read_file(path);
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw FormatError(path.string() + ": " + image.message, 0);
    Raster r;
    r.width = image.width;
    r.height = image.height;
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    r.channels = color ? 3 : 1;
    r.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, r.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(path.string() + ": " + msg, 0);
    }
    return r;
}

void write_png(const fs::path& path, const Raster& raster) {
    check_raster(raster);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width);
    image.height = static_cast<png_uint_32>(raster.height);
    image.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, raster.pixels.data(), 0, nullptr))
        throw std::runtime_error("cannot encode PNG for " + path.string() + ": " + image.message);
    std::vector<std::uint8_t> buf(size);
    if (!png_image_write_to_memory(&image, buf.data(), &size, 0, raster.pixels.data(), 0, nullptr))
        throw std::runtime_error("cannot encode PNG for " + path.string() + ": " + image.message);
    buf.resize(size);
    write_file(path, buf);
}

Raster read_image(const fs::path& path) {
    const auto ext = lower_extension(path);
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw std::invalid_argument("unsupported image extension for " + path.string());
}

void write_image(const fs::path& path, const Raster& raster) {
    const auto ext = lower_extension(path);
    if (ext == ".pgm") return write_pgm(path, raster);
    if (ext == ".png") return write_png(path, raster);
    throw std::invalid_argument("unsupported image extension for " + path.string() + " (use .pgm or .png)");
}

Tensor tensor_from_raster(const Raster& raster, const PixelDomain& domain) {
    check_raster(raster);
    Tensor t({raster.height, raster.width, raster.channels});
    const double scale = domain.width() / 255.0;
    for (std::size_t i = 0; i < raster.pixels.size(); ++i) t[i] = domain.lo + scale * raster.pixels[i];
    return t;
}

Raster raster_from_tensor(const Tensor& image, const PixelDomain& domain) {
    const auto& s = image.shape();
    if (s.size() != 3 || (s[2] != 1 && s[2] != 3))
        throw std::invalid_argument("image tensor must be H x W x 1 or H x W x 3, got " + shape_string(s));
    Raster r{s[1], s[0], s[2], std::vector<std::uint8_t>(image.size())};
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp((image[i] - domain.lo) / domain.width() * 255.0, 0.0, 255.0);
        r.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return r;
}

Raster perturbation_raster(const Tensor& rho) {
    const auto& s = rho.shape();
    if (s.size() != 3 || (s[2] != 1 && s[2] != 3))
        throw std::invalid_argument("perturbation must be H x W x 1 or H x W x 3, got " + shape_string(s));
    const std::size_t c = s[2];
    Raster r{s[1], s[0], c, std::vector<std::uint8_t>(rho.size())};
    for (std::size_t ch = 0; ch < c; ++ch) {
        double lo = rho[ch], hi = rho[ch];
        for (std::size_t i = ch; i < rho.size(); i += c) {
            lo = std::min(lo, rho[i]);
            hi = std::max(hi, rho[i]);
        }
        for (std::size_t i = ch; i < rho.size(); i += c) {
            if (hi == lo) {
                r.pixels[i] = 128;
            } else {
                const double unit = (rho[i] - lo) / (hi - lo);
                r.pixels[i] = static_cast<std::uint8_t>(std::lround(unit * 255.0));
            }
        }
    }
    return r;
}

void export_perturbation_image(const Perturbation& rho, const fs::path& path) {
    write_image(path, perturbation_raster(rho.tensor));
}

void apply_and_export(const Tensor& image, const Tensor& rho, const PixelDomain& domain, const fs::path& path) {
    write_image(path, raster_from_tensor(perturb(image, rho, domain), domain));
}

void write_idx_dataset(const Dataset& data, const fs::path& images, const fs::path& labels) {
    if (data.empty()) throw std::invalid_argument("cannot write an empty dataset");
    const auto& s = data.image_shape();
    IdxArray img;
    img.dims.push_back(static_cast<std::uint32_t>(data.size()));
    img.dims.push_back(static_cast<std::uint32_t>(s.at(0)));
    img.dims.push_back(static_cast<std::uint32_t>(s.at(1)));
    if (s.at(2) != 1) img.dims.push_back(static_cast<std::uint32_t>(s[2]));
    IdxArray lab;
    lab.dims.push_back(static_cast<std::uint32_t>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Raster r = raster_from_tensor(data.images[i], data.domain);
        img.data.insert(img.data.end(), r.pixels.begin(), r.pixels.end());
        lab.data.push_back(static_cast<std::uint8_t>(data.labels[i]));
    }
    write_idx(images, img);
    write_idx(labels, lab);
}

// --- dataset loading -------------------------------------------------------------

namespace {

struct Entry {
    fs::path path;
    ClassId label;
};

void apply_caps(Dataset& d, const std::map<std::string, std::size_t>& caps) {
    if (caps.empty()) return;
    std::vector<std::size_t> limit(d.num_classes(), SIZE_MAX);
    for (const auto& [name, cap] : caps) limit[d.class_index(name)] = cap;
    std::vector<std::size_t> seen(d.num_classes(), 0);
    Dataset out;
    out.class_names = d.class_names;
    out.split = d.split;
    out.domain = d.domain;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const ClassId y = d.labels[i];
        if (seen[y]++ < limit[y]) {
            out.images.push_back(std::move(d.images[i]));
            out.labels.push_back(y);
        }
    }
    d = std::move(out);
}

Dataset load_idx_split(const DatasetManifest& m, const SplitSource& s, Dataset d) {
    if (s.images.empty() || s.labels.empty()) throw std::invalid_argument("idx split needs images and labels paths");
    const IdxArray images = read_idx(s.images);
    const IdxArray labels = read_idx(s.labels);
    if (images.dims.size() < 3 || images.dims.size() > 4)
        throw FormatError(s.images.string() + ": IDX images must have rank 3 or 4", 3);
    if (labels.dims.size() != 1) throw FormatError(s.labels.string() + ": IDX labels must have rank 1", 3);
    if (images.dims[0] != labels.dims[0])
        throw FormatError(s.labels.string() + ": " + std::to_string(labels.dims[0]) + " labels for " +
                              std::to_string(images.dims[0]) + " images",
                          4);
    const std::size_t h = images.dims[1], w = images.dims[2], c = images.dims.size() == 4 ? images.dims[3] : 1;
    const std::size_t per = h * w * c;
    const double scale = m.domain.width() / 255.0;
    for (std::size_t i = 0; i < images.dims[0]; ++i) {
        const auto raw = static_cast<std::int64_t>(labels.data[i]);
        const auto it = std::find(m.idx_labels.begin(), m.idx_labels.end(), raw);
        if (it == m.idx_labels.end()) continue;
        Tensor t({h, w, c});
        for (std::size_t j = 0; j < per; ++j) t[j] = m.domain.lo + scale * images.data[i * per + j];
        d.images.push_back(std::move(t));
        d.labels.push_back(static_cast<ClassId>(it - m.idx_labels.begin()));
    }
    return d;
}

Dataset load_entries(std::vector<Entry> entries, const PixelDomain& domain, Dataset d) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.path.generic_string() < b.path.generic_string(); });
    for (const auto& e : entries) {
        Tensor t = tensor_from_raster(read_image(e.path), domain);
        if (!d.images.empty() && t.shape() != d.images.front().shape())
            throw std::invalid_argument(e.path.string() + ": image shape " + shape_string(t.shape()) +
                                        " differs from " + shape_string(d.images.front().shape()));
        d.images.push_back(std::move(t));
        d.labels.push_back(e.label);
    }
    return d;
}

Dataset load_image_dir_split(const SplitSource& s, const PixelDomain& domain, Dataset d) {
    if (s.root.empty()) throw std::invalid_argument("image_dir split needs a root directory");
    if (!fs::is_directory(s.root)) throw std::runtime_error("image directory " + s.root.string() + " does not exist");
    std::vector<Entry> entries;
    for (const auto& cls : fs::directory_iterator(s.root)) {
        if (!cls.is_directory()) continue;
        const std::string name = cls.path().filename().string();
        const auto it = std::find(d.class_names.begin(), d.class_names.end(), name);
        if (it == d.class_names.end())
            throw std::invalid_argument(cls.path().string() + ": unknown class name '" + name + "'");
        for (const auto& f : fs::directory_iterator(cls.path())) {
            const auto ext = lower_extension(f.path());
            if (f.is_regular_file() && (ext == ".pgm" || ext == ".png"))
                entries.push_back({f.path(), static_cast<ClassId>(it - d.class_names.begin())});
        }
    }
    return load_entries(std::move(entries), domain, std::move(d));
}

Dataset load_csv_split(const SplitSource& s, const PixelDomain& domain, Dataset d) {
    if (s.csv.empty()) throw std::invalid_argument("csv_manifest split needs a csv path");
    const auto bytes = read_file(s.csv);
    const std::string text(bytes.begin(), bytes.end());
    std::vector<Entry> entries;
    std::size_t pos = 0, line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        const std::size_t line_at = pos;
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError(s.csv.string() + ": line " + std::to_string(line_no) + " lacks a comma", line_at);
        const std::string path = line.substr(0, comma);
        const std::string cls = line.substr(comma + 1);
        if (!header_seen) {
            header_seen = true;
            if (path != "path" || cls != "class_name")
                throw FormatError(s.csv.string() + ": header must be 'path,class_name'", line_at);
            continue;
        }
        const auto it = std::find(d.class_names.begin(), d.class_names.end(), cls);
        if (it == d.class_names.end())
            throw FormatError(s.csv.string() + ": line " + std::to_string(line_no) + ": unknown class name '" + cls + "'",
                              line_at + comma + 1);
        entries.push_back({resolve(s.csv.parent_path(), path), static_cast<ClassId>(it - d.class_names.begin())});
    }
    return load_entries(std::move(entries), domain, std::move(d));
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest, Split split) {
    manifest.validate();
    const SplitSource& s = split == Split::Train ? manifest.train : manifest.test;
    Dataset d;
    d.class_names = manifest.class_names;
    d.split = split;
    d.domain = manifest.domain;
    switch (manifest.format) {
        case ManifestFormat::Idx: d = load_idx_split(manifest, s, std::move(d)); break;
        case ManifestFormat::ImageDir: d = load_image_dir_split(s, manifest.domain, std::move(d)); break;
        case ManifestFormat::CsvManifest: d = load_csv_split(s, manifest.domain, std::move(d)); break;
    }
    apply_caps(d, s.caps);
    d.validate();
    return d;
}

}  // namespace uap

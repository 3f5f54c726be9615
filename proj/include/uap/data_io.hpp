#ifndef UAP_DATA_IO_HPP
#define UAP_DATA_IO_HPP

#include "uap/attacks.hpp"
#include "uap/dataset.hpp"
#include "uap/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace uap {

namespace fs = std::filesystem;

enum class ManifestFormat { Idx, ImageDir, CsvManifest };

std::string to_string(ManifestFormat f);
ManifestFormat parse_manifest_format(const std::string& s);

// Where one split's images live. Only the fields of the manifest's format are
// used. caps limits the number of images per class name (first N in load
// order).
struct SplitSource {
    fs::path images;  // idx
    fs::path labels;  // idx
    fs::path root;    // image_dir: one subdirectory per class
    fs::path csv;     // csv_manifest: columns path,class_name
    std::map<std::string, std::size_t> caps;
};

struct DatasetManifest {
    ManifestFormat format = ManifestFormat::Idx;
    std::vector<std::string> class_names;
    std::vector<std::int64_t> idx_labels;  // idx: raw label value of each class; other values are skipped
    SplitSource train;
    SplitSource test;
    PixelDomain domain;

    // Relative paths resolve against base_dir.
    static DatasetManifest from_json(const nlohmann::json& j, const fs::path& base_dir);
    static DatasetManifest load(const fs::path& path);
    nlohmann::ordered_json to_json() const;

    void validate() const;
};

// Images in file order (idx) or lexicographic path order (image_dir,
// csv_manifest), class caps applied afterwards.
Dataset load_dataset(const DatasetManifest& manifest, Split split);

// --- IDX -------------------------------------------------------------------

struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

// Unsigned-byte IDX only (type code 0x08), big-endian header.
IdxArray read_idx(const fs::path& path);
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxArray& array);
void write_idx(const fs::path& path, const IdxArray& array);

// --- raster images -----------------------------------------------------------

struct Raster {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;  // 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

Raster read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Raster& raster);
Raster read_png(const fs::path& path);
void write_png(const fs::path& path, const Raster& raster);

// Dispatches on extension: .pgm or .png.
Raster read_image(const fs::path& path);
void write_image(const fs::path& path, const Raster& raster);

// u8 pixels mapped linearly onto the domain (identity for [0, 255]).
Tensor tensor_from_raster(const Raster& raster, const PixelDomain& domain = {});

// Domain values mapped onto 0..255 and rounded.
Raster raster_from_tensor(const Tensor& image, const PixelDomain& domain = {});

// Min-max scaled per channel to [0, 1] then quantised to 8 bits; a constant
// channel maps to 128.
Raster perturbation_raster(const Tensor& rho);

void export_perturbation_image(const Perturbation& rho, const fs::path& path);

// Writes clip(image + rho) in native pixel units, no rescaling.
void apply_and_export(const Tensor& image, const Tensor& rho, const PixelDomain& domain, const fs::path& path);

// Writes a dataset as an IDX image/label pair (labels are class indices).
void write_idx_dataset(const Dataset& data, const fs::path& images, const fs::path& labels);

}  // namespace uap

#endif  // UAP_DATA_IO_HPP

#ifndef UAP_SYNTHETIC_DIGITS_HPP
#define UAP_SYNTHETIC_DIGITS_HPP

#include "uap/data_io.hpp"
#include "uap/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uap {

// Procedurally rendered handwritten-style digits, 28 x 28, u8, MNIST layout
// (20 x 20 glyph box centred, black background). Each sample draws its own
// stroke jitter, affine warp, pen width and ink level.
struct SyntheticDigitsOptions {
    std::vector<int> digits;                // raw labels, one per class
    std::vector<std::string> class_names;
    std::vector<std::size_t> train_counts;  // per class
    std::vector<std::size_t> test_counts;   // per class
    std::uint64_t seed = 0;
    double jitter = 0.045;  // control-point displacement, unit box
    double warp = 1.0;      // multiplier on rotation, shear and translation ranges

    void validate() const;
};

// Three classes, 6,000 training images with the last class at 1%
// (3,000 / 2,940 / 60) and 1,000 test images (450 / 450 / 100), drawn with
// doubled warp and jitter so a small CNN lands near 95% test accuracy.
SyntheticDigitsOptions desk_digits_preset(std::uint64_t seed = 2020);

Raster render_digit(int digit, Rng& rng, const SyntheticDigitsOptions& style = {});

// Shuffled set with counts[i] samples of digits[i]; labels are class indices.
Dataset synthesize_digits(const SyntheticDigitsOptions& options, Split split);

// Writes train/test IDX pairs (raw digit labels) and manifest.json into dir;
// returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticDigitsOptions& options);

}  // namespace uap

#endif  // UAP_SYNTHETIC_DIGITS_HPP

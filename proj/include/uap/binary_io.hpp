#ifndef UAP_BINARY_IO_HPP
#define UAP_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uap {

// Malformed or truncated binary input; offset is the byte position where
// parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    // Same error with a location prefix (typically the file path).
    FormatError(const std::string& prefix, const FormatError& inner)
        : std::runtime_error(prefix + ": " + inner.what()), offset_(inner.offset_) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so a failed write never
// leaves a partial file behind.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    // Appends CRC32 of everything written so far.
    void seal() { u32(crc32(buf_)); }

    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(std::string_view magic) {
        need(magic.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
            throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
        pos_ += magic.size();
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }

    // Validates the trailing CRC32 over all preceding bytes; must be the last
    // field.
    void verify_seal() {
        const std::size_t at = pos_;
        const std::uint32_t stored = u32("CRC32");
        const std::uint32_t actual = crc32(bytes_.first(at));
        if (stored != actual) throw FormatError("CRC32 mismatch", at);
        if (pos_ != bytes_.size()) throw FormatError("trailing bytes after CRC32", pos_);
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            throw FormatError(std::string("truncated input while reading ") + what + ": need " + std::to_string(n) +
                                  " bytes, " + std::to_string(remaining()) + " left",
                              pos_);
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace uap

#endif  // UAP_BINARY_IO_HPP

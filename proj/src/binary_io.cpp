#include "craft/binary_io.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

namespace craft {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

} // namespace

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (const std::uint8_t b : data) c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void ByteWriter::magic(const char tag[4]) {
    buf_.insert(buf_.end(), tag, tag + 4);
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::i64(std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

void ByteWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void ByteWriter::f64_span(std::span<const double> v) {
    for (const double d : v) f64(d);
}

void ByteWriter::write_file(const std::string& path) const {
    const std::uint32_t crc = crc32(buf_);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    for (int i = 0; i < 4; ++i) {
        const char byte = static_cast<char>(crc >> (8 * i));
        out.write(&byte, 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

ByteReader::ByteReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> all((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (all.size() < 4) throw std::runtime_error("truncated file: " + path);
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(all[all.size() - 4 + i]) << (8 * i);
    all.resize(all.size() - 4);
    if (crc32(all) != stored) throw std::runtime_error("checksum failure: " + path);
    payload_ = std::move(all);
}

void ByteReader::need(std::size_t n) {
    if (pos_ + n > payload_.size()) throw std::runtime_error("truncated file");
}

void ByteReader::expect_magic(const char tag[4], const std::string& what) {
    need(4);
    if (std::memcmp(payload_.data() + pos_, tag, 4) != 0)
        throw std::runtime_error("bad magic bytes: not a " + what + " file");
    pos_ += 4;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(payload_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::int64_t ByteReader::i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(payload_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return static_cast<std::int64_t>(v);
}

double ByteReader::f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(payload_[pos_ + i]) << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

void ByteReader::f64_span(std::span<double> out) {
    for (double& d : out) d = f64();
}

} // namespace craft

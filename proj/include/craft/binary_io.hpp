#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace craft {

/// CRC-32 (IEEE, reflected polynomial 0xEDB88320).
std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Little-endian append-only byte buffer. write_file() appends a CRC-32 of
/// everything written so far, so files carry their own integrity check.
class ByteWriter {
public:
    void magic(const char tag[4]);
    void u32(std::uint32_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void f64_span(std::span<const double> v);

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    void write_file(const std::string& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

/// Reads a file written by ByteWriter. The constructor verifies the CRC-32
/// trailer before any field is handed out; reads past the payload throw.
class ByteReader {
public:
    explicit ByteReader(const std::string& path);

    void expect_magic(const char tag[4], const std::string& what);
    std::uint32_t u32();
    std::int64_t i64();
    double f64();
    void f64_span(std::span<double> out);
    std::size_t remaining() const { return payload_.size() - pos_; }

private:
    void need(std::size_t n);
    std::vector<std::uint8_t> payload_;
    std::size_t pos_ = 0;
};

} // namespace craft

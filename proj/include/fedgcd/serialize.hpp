#ifndef FEDGCD_SERIALIZE_HPP
#define FEDGCD_SERIALIZE_HPP

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace fedgcd {

// Little-endian binary buffer writer/reader used by all on-disk and on-wire
// formats ("FGCD" features, "FGCW" weights, "FGCG" GMMs). Byte layout is
// explicit so files are identical across platforms.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void i64(int64_t v);
    void f64(double v);
    void bytes(const void* p, size_t n);
    void magic(const char tag[4]) { bytes(tag, 4); }

    const std::vector<uint8_t>& data() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<uint8_t>& buf) : buf_(buf.data()), size_(buf.size()) {}
    ByteReader(const uint8_t* p, size_t n) : buf_(p), size_(n) {}

    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    int64_t i64();
    double f64();
    void expect_magic(const char tag[4]);
    size_t remaining() const { return size_ - pos_; }

private:
    void need(size_t n);
    const uint8_t* buf_;
    size_t size_;
    size_t pos_ = 0;
};

// FNV-1a 64-bit, used for payload digests and config hashes.
uint64_t fnv1a(const void* data, size_t n);
uint64_t fnv1a(const std::vector<uint8_t>& data);
std::string hex64(uint64_t v);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& data);

}  // namespace fedgcd

#endif

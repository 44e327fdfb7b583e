#include "fedgcd/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fedgcd {

void ByteWriter::u16(uint16_t v) {
    buf_.push_back(uint8_t(v & 0xff));
    buf_.push_back(uint8_t(v >> 8));
}

void ByteWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void ByteWriter::i64(int64_t v) { u64(static_cast<uint64_t>(v)); }

void ByteWriter::f64(double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    u64(bits);
}

void ByteWriter::bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}

void ByteReader::need(size_t n) {
    if (pos_ + n > size_) throw std::runtime_error("binary payload truncated");
}

uint8_t ByteReader::u8() {
    need(1);
    return buf_[pos_++];
}

uint16_t ByteReader::u16() {
    need(2);
    uint16_t v = uint16_t(buf_[pos_]) | uint16_t(buf_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
}

uint32_t ByteReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

uint64_t ByteReader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

int64_t ByteReader::i64() { return static_cast<int64_t>(u64()); }

double ByteReader::f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void ByteReader::expect_magic(const char tag[4]) {
    need(4);
    if (std::memcmp(buf_ + pos_, tag, 4) != 0)
        throw std::runtime_error(std::string("bad magic, expected ") + std::string(tag, 4));
    pos_ += 4;
}

uint64_t fnv1a(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a(const std::vector<uint8_t>& data) { return fnv1a(data.data(), data.size()); }

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
}

}  // namespace fedgcd

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace led {

// Little-endian binary writer for the LED* artifact files. We only target
// little-endian hosts; the formats are defined as little-endian on disk.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path);
    ~BinaryWriter();
    BinaryWriter(const BinaryWriter&) = delete;
    BinaryWriter& operator=(const BinaryWriter&) = delete;

    void magic(const char tag[4]);
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i32(int32_t v) { raw(&v, 4); }
    void i64(int64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s);
    void span_f32(std::span<const float> s) { raw(s.data(), s.size() * 4); }
    void span_u32(std::span<const uint32_t> s) { raw(s.data(), s.size() * 4); }
    void span_u64(std::span<const uint64_t> s) { raw(s.data(), s.size() * 8); }
    void span_i32(std::span<const int32_t> s) { raw(s.data(), s.size() * 4); }
    void raw(const void* p, size_t n);
    void close();

private:
    std::FILE* f_ = nullptr;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path);
    ~BinaryReader();
    BinaryReader(const BinaryReader&) = delete;
    BinaryReader& operator=(const BinaryReader&) = delete;

    void expect_magic(const char tag[4]);
    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    int32_t i32();
    int64_t i64();
    float f32();
    double f64();
    std::string str();
    void read_f32(std::span<float> out) { raw(out.data(), out.size() * 4); }
    void read_u32(std::span<uint32_t> out) { raw(out.data(), out.size() * 4); }
    void read_u64(std::span<uint64_t> out) { raw(out.data(), out.size() * 8); }
    void read_i32(std::span<int32_t> out) { raw(out.data(), out.size() * 4); }
    void raw(void* p, size_t n);
    bool at_eof();

private:
    std::FILE* f_ = nullptr;
    std::string path_;
};

// FNV-1a hash of a whole file, hex-encoded. Used by stage manifests.
std::string hash_file_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace led

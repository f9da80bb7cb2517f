#include "led/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "led/common.hpp"

namespace led {

BinaryWriter::BinaryWriter(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw std::runtime_error("cannot open for writing: " + path);
}

BinaryWriter::~BinaryWriter() { close(); }

void BinaryWriter::close() {
    if (f_) {
        if (std::fclose(f_) != 0) {
            f_ = nullptr;
            throw std::runtime_error("write failed on close: " + path_);
        }
        f_ = nullptr;
    }
}

void BinaryWriter::magic(const char tag[4]) { raw(tag, 4); }

void BinaryWriter::str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
}

void BinaryWriter::raw(const void* p, size_t n) {
    if (n == 0) return;
    if (std::fwrite(p, 1, n, f_) != n) throw std::runtime_error("short write: " + path_);
}

BinaryReader::BinaryReader(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_) throw std::runtime_error("cannot open for reading: " + path);
}

BinaryReader::~BinaryReader() {
    if (f_) std::fclose(f_);
}

void BinaryReader::expect_magic(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0) {
        throw std::runtime_error(path_ + ": bad magic, expected " + std::string(tag, 4));
    }
}

uint8_t BinaryReader::u8() { uint8_t v; raw(&v, 1); return v; }
uint32_t BinaryReader::u32() { uint32_t v; raw(&v, 4); return v; }
uint64_t BinaryReader::u64() { uint64_t v; raw(&v, 8); return v; }
int32_t BinaryReader::i32() { int32_t v; raw(&v, 4); return v; }
int64_t BinaryReader::i64() { int64_t v; raw(&v, 8); return v; }
float BinaryReader::f32() { float v; raw(&v, 4); return v; }
double BinaryReader::f64() { double v; raw(&v, 8); return v; }

std::string BinaryReader::str() {
    uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
}

void BinaryReader::raw(void* p, size_t n) {
    if (n == 0) return;
    if (std::fread(p, 1, n, f_) != n) throw std::runtime_error("truncated file: " + path_);
}

bool BinaryReader::at_eof() {
    int c = std::fgetc(f_);
    if (c == EOF) return true;
    std::ungetc(c, f_);
    return false;
}

std::string hash_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << content;
    if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace led

#pragma once

// Little-endian binary stream helpers shared by the feature and index
// file formats.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace provfilter {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class BinaryWriter {
  public:
    explicit BinaryWriter(const std::string& path)
        : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void put_bytes(const void* data, size_t n) {
        out_.write(reinterpret_cast<const char*>(data), std::streamsize(n));
    }

    void put_string(const std::string& s) {
        put<uint32_t>(uint32_t(s.size()));
        put_bytes(s.data(), s.size());
    }

    template <typename T>
    void put_vector(const std::vector<T>& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        put<uint64_t>(v.size());
        put_bytes(v.data(), v.size() * sizeof(T));
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed on close");
    }

  private:
    std::ofstream out_;
};

class BinaryReader {
  public:
    explicit BinaryReader(const std::string& path)
        : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    template <typename T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw FormatError("unexpected end of file");
        return v;
    }

    void get_bytes(void* data, size_t n) {
        in_.read(reinterpret_cast<char*>(data), std::streamsize(n));
        if (!in_) throw FormatError("unexpected end of file");
    }

    std::string get_string() {
        auto n = get<uint32_t>();
        std::string s(n, '\0');
        if (n) get_bytes(s.data(), n);
        return s;
    }

    template <typename T>
    std::vector<T> get_vector() {
        static_assert(std::is_trivially_copyable_v<T>);
        auto n = get<uint64_t>();
        std::vector<T> v(n);
        if (n) get_bytes(v.data(), n * sizeof(T));
        return v;
    }

  private:
    std::ifstream in_;
};

}  // namespace provfilter

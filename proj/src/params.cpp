// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/params.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "oed/errors.hpp"

namespace oed {

static_assert(std::endian::native == std::endian::little, "snapshot codec assumes a little-endian host");

std::size_t ParamSet::add(std::string name, Tensor t) {
    require(std::find(names.begin(), names.end(), name) == names.end(), "duplicate parameter name " + name);
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
    return tensors.size() - 1;
}

std::size_t ParamSet::numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
}

void ParamSet::require_same_layout(const ParamSet& other) const {
    require(size() == other.size(), "parameter sets differ in tensor count");
    for (std::size_t i = 0; i < size(); ++i) {
        require(names[i] == other.names[i], "parameter name mismatch: " + names[i] + " vs " + other.names[i]);
        require(tensors[i].shape() == other.tensors[i].shape(),
                "parameter shape mismatch for " + names[i] + ": " + shape_to_string(tensors[i].shape()) + " vs " +
                    shape_to_string(other.tensors[i].shape()));
    }
}

namespace {

constexpr char kMagic[8] = {'O', 'E', 'D', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& b) : bytes_(b) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw IoError("snapshot: truncated file");
    }
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_snapshot(const ParamSet& params) {
    std::vector<unsigned char> out(kMagic, kMagic + 8);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.names[i];
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        const auto& shape = params.tensors[i].shape();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) put<std::uint64_t>(out, d);
    }
    for (const auto& t : params.tensors)
        for (double v : t.data()) put<double>(out, v);
    return out;
}

ParamSet decode_snapshot(const std::vector<unsigned char>& bytes) {
    Reader r(bytes);
    if (r.string(8) != std::string(kMagic, 8)) throw IoError("snapshot: bad magic");
    if (r.get<std::uint32_t>() != kVersion) throw IoError("snapshot: unsupported version");
    const auto count = r.get<std::uint32_t>();
    ParamSet p;
    std::vector<Shape> shapes;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>();
        p.names.push_back(r.string(len));
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw IoError("snapshot: implausible rank");
        Shape s;
        for (std::uint32_t k = 0; k < rank; ++k) s.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
        shapes.push_back(std::move(s));
    }
    for (auto& s : shapes) {
        std::vector<double> data(shape_numel(s));
        for (auto& v : data) v = r.get<double>();
        p.tensors.emplace_back(std::move(s), std::move(data));
    }
    if (!r.done()) throw IoError("snapshot: trailing bytes");
    return p;
}

void save_snapshot(const ParamSet& params, const std::filesystem::path& path) {
    const auto bytes = encode_snapshot(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

ParamSet load_snapshot(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_snapshot(bytes);
}

}  // namespace oed

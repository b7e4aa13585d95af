// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vicl {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'I', 'C', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, s_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == s_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > s_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& s_;
    std::size_t pos_ = 0;
};

} // namespace

void Checkpoint::add(const std::string& name, const Array& a) {
    if (has(name)) throw Error("checkpoint already holds an array named '" + name + "'");
    arrays.emplace_back(name, a);
}

void Checkpoint::add_params(const std::string& prefix, const ParamList& params) {
    for (const auto& p : params.items()) add(prefix + p.name, p.var.value());
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, a] : arrays) {
        if (n == name) return true;
    }
    return false;
}

const Array& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, a] : arrays) {
        if (n == name) return a;
    }
    throw IoError("checkpoint has no array named '" + name + "'");
}

void Checkpoint::load_params(const std::string& prefix, ParamList& params) const {
    for (const auto& p : params.items()) {
        const Array& src = get(prefix + p.name);
        Var v = p.var;
        if (src.shape() != v.shape()) {
            throw ShapeError("checkpoint array '" + prefix + p.name + "' has shape " + shape_str(src.shape()) +
                             ", expected " + shape_str(v.shape()));
        }
        v.mutable_value() = src;
    }
}

std::string serialize(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string header = ckpt.header.dump();
    put<std::uint64_t>(out, header.size());
    out += header;
    put<std::uint64_t>(out, ckpt.arrays.size());
    for (const auto& [name, a] : ckpt.arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape().size()));
        for (auto e : a.shape()) put<std::uint64_t>(out, e);
        out.append(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(double));
    }
    return out;
}

Checkpoint deserialize(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    const auto hlen = r.get<std::uint64_t>();
    c.header = nlohmann::ordered_json::parse(r.bytes(hlen));
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto nd = r.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t d = 0; d < nd; ++d) shape.push_back(r.get<std::uint64_t>());
        const std::size_t n = shape_size(shape);
        std::vector<double> data(n);
        const std::string raw = r.bytes(n * sizeof(double));
        std::memcpy(data.data(), raw.data(), raw.size());
        c.arrays.emplace_back(std::move(name), Array(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw IoError("trailing bytes after checkpoint arrays");
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + path);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, serialize(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize(read_file(path)); }

} // namespace vicl

#include "waveud/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "waveud/errors.hpp"

namespace waveud {

namespace {
constexpr char kMagic[8] = {'W', 'U', 'D', 'C', 'K', 'P', 'T', '1'};
}

void BlobWriter::add(const std::string& name, int batch, int channels, int time, const float* data,
                     std::size_t n) {
    if (static_cast<std::size_t>(batch) * channels * time != n)
        throw shape_error("blob: " + name + " size does not match its shape");
    BlobEntry e;
    e.name = name;
    e.batch = batch;
    e.channels = channels;
    e.time = time;
    e.data.assign(data, data + n);
    entries_.push_back(std::move(e));
}

void BlobWriter::write(const std::string& path) const {
    nlohmann::json header;
    header["meta"] = nlohmann::json::parse(meta_);
    auto manifest = nlohmann::json::array();
    for (const auto& e : entries_)
        manifest.push_back({{"name", e.name}, {"shape", {e.batch, e.channels, e.time}}});
    header["tensors"] = manifest;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = header_text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& e : entries_)
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    if (!out) throw io_error("write failed for " + path);
}

BlobReader::BlobReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw format_error(path + ": not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_text(len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw format_error(path + ": truncated header");

    nlohmann::json header = nlohmann::json::parse(header_text);
    meta_ = header.at("meta").dump();
    for (const auto& item : header.at("tensors")) {
        BlobEntry e;
        e.name = item.at("name").get<std::string>();
        const auto& shape = item.at("shape");
        e.batch = shape.at(0).get<int>();
        e.channels = shape.at(1).get<int>();
        e.time = shape.at(2).get<int>();
        e.data.resize(static_cast<std::size_t>(e.batch) * e.channels * e.time);
        in.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(float)));
        if (!in) throw format_error(path + ": truncated tensor data for " + e.name);
        entries_.push_back(std::move(e));
    }
}

bool BlobReader::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const BlobEntry& BlobReader::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw format_error("checkpoint: missing tensor " + name);
}

} // namespace waveud

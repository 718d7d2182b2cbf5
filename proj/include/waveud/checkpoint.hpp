#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waveud/tensor.hpp"

namespace waveud {

// Checkpoint container: a magic tag, one JSON metadata document (which also
// carries the ordered tensor manifest with shapes), then the raw
// little-endian float32 payload in manifest order. Writing the same state
// twice produces byte-identical files.
struct BlobEntry {
    std::string name;
    int batch = 1, channels = 1, time = 1;
    std::vector<float> data;
};

class BlobWriter {
public:
    // meta_json must be a serialized JSON object.
    explicit BlobWriter(std::string meta_json) : meta_(std::move(meta_json)) {}

    void add(const std::string& name, int batch, int channels, int time, const float* data,
             std::size_t n);

    template <typename T>
    void add_tensor(const std::string& name, const Tensor3<T>& t) {
        std::vector<float> buf(t.size());
        for (std::size_t i = 0; i < buf.size(); ++i)
            buf[i] = static_cast<float>(t.data()[i]);
        add(name, t.batch(), t.channels(), t.time(), buf.data(), buf.size());
    }

    void write(const std::string& path) const;

private:
    std::string meta_;
    std::vector<BlobEntry> entries_;
};

class BlobReader {
public:
    explicit BlobReader(const std::string& path);

    const std::string& meta_json() const { return meta_; }
    bool has(const std::string& name) const;
    const BlobEntry& get(const std::string& name) const;

    // Copies into an existing tensor, validating the shape.
    template <typename T>
    void load_into(const std::string& name, Tensor3<T>& t) const {
        const BlobEntry& e = get(name);
        if (e.batch != t.batch() || e.channels != t.channels() || e.time != t.time())
            throw shape_error("checkpoint: tensor " + name + " has shape (" +
                              std::to_string(e.batch) + ", " + std::to_string(e.channels) + ", " +
                              std::to_string(e.time) + "), model expects " + t.shape_str());
        for (std::size_t i = 0; i < e.data.size(); ++i)
            t.data()[i] = static_cast<T>(e.data[i]);
    }

private:
    std::string meta_;
    std::vector<BlobEntry> entries_;
};

} // namespace waveud

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlrn/error.hpp"
#include "mlrn/graph_json.hpp"
#include "mlrn/model.hpp"
#include "mlrn/rng.hpp"

namespace mlrn {

// Checkpoint layout (little-endian):
//   "MLRN" magic, u32 version, u64 graph-spec byte length, graph-spec JSON,
//   parameter payload, optimizer velocities, BN running statistics
//   (mean then var per bn node, id order), u64 epoch, u64 RNG-state length,
//   RNG-state text. All scalars stored as f64 in deterministic node-id
//   order, so float and double models round-trip exactly.
inline constexpr char kCheckpointMagic[4] = {'M', 'L', 'R', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

struct ByteWriter {
    std::ofstream out;
    explicit ByteWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    }
    void bytes(const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
};

struct ByteReader {
    std::vector<unsigned char> buf;
    std::size_t pos = 0;
    explicit ByteReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open checkpoint '" + path + "'");
        buf.resize(static_cast<std::size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ParseError("checkpoint truncated");
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace detail

template <typename T>
struct TrainState {
    Model<T> model;
    std::vector<std::vector<T>> velocities;
    std::uint64_t epoch = 0;
    std::string rng_state;
};

template <typename T>
void save_checkpoint(Model<T>& model, const std::vector<std::vector<T>>& velocities,
                     std::uint64_t epoch, const std::string& rng_state, const std::string& path) {
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    detail::ByteWriter w(path);
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    const std::string spec = serialize_graph(model.graph());
    w.u64(spec.size());
    w.bytes(spec.data(), spec.size());

    const auto params = model.parameters();
    for (const auto* p : params)
        for (std::int64_t i = 0; i < p->size(); ++i) w.f64(static_cast<double>(p->at(i)));
    if (velocities.size() != params.size())
        throw Error("save_checkpoint: velocity count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (velocities[k].empty()) {
            for (std::int64_t i = 0; i < params[k]->size(); ++i) w.f64(0.0);
        } else {
            for (T v : velocities[k]) w.f64(static_cast<double>(v));
        }
    }
    for (auto& [id, bn] : model.bn_states()) {
        (void)id;
        for (T v : bn.running_mean) w.f64(static_cast<double>(v));
        for (T v : bn.running_var) w.f64(static_cast<double>(v));
    }
    w.u64(epoch);
    w.u64(rng_state.size());
    w.bytes(rng_state.data(), rng_state.size());
    w.out.flush();
    if (!w.out) throw IoError("failed writing checkpoint '" + path + "'");
}

template <typename T>
TrainState<T> load_checkpoint(const std::string& path) {
    detail::ByteReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint version " + std::to_string(version) + " unsupported, want " +
                         std::to_string(kCheckpointVersion));
    const auto spec_len = r.u64();
    r.need(spec_len);
    std::string spec(reinterpret_cast<const char*>(r.buf.data() + r.pos), spec_len);
    r.pos += spec_len;
    NetworkGraph g = deserialize_graph(spec);

    // payload size must match the embedded graph exactly
    const auto pc = count_params(g);
    const std::uint64_t expected_scalars =
        2 * static_cast<std::uint64_t>(pc.learnable) + static_cast<std::uint64_t>(pc.non_learnable);
    const std::uint64_t tail = 8 + 8;  // epoch + rng length (rng text follows)
    if (r.buf.size() - r.pos < expected_scalars * 8 + tail)
        throw ParseError("checkpoint payload does not match embedded graph: want " +
                         std::to_string(expected_scalars) + " scalars");

    TrainState<T> st{Model<T>(g, 0), {}, 0, ""};
    auto params = st.model.parameters();
    for (auto* p : params)
        for (std::int64_t i = 0; i < p->size(); ++i) p->at(i) = static_cast<T>(r.f64());
    st.velocities.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        st.velocities[k].resize(static_cast<std::size_t>(params[k]->size()));
        for (auto& v : st.velocities[k]) v = static_cast<T>(r.f64());
    }
    for (auto& [id, bn] : st.model.bn_states()) {
        (void)id;
        for (auto& v : bn.running_mean) v = static_cast<T>(r.f64());
        for (auto& v : bn.running_var) v = static_cast<T>(r.f64());
    }
    st.epoch = r.u64();
    const auto rng_len = r.u64();
    r.need(rng_len);
    st.rng_state.assign(reinterpret_cast<const char*>(r.buf.data() + r.pos), rng_len);
    r.pos += rng_len;
    return st;
}

}  // namespace mlrn

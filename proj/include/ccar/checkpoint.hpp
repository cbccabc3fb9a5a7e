#pragma once

// Binary checkpoint:
//   "CCARCKPT" | u32 version | u64 seed | u32 epoch | u32 D | u32 C | u32 K
//   | u32 len + config text | u32 layer count
//   | per layer: u32 out, u32 in, u8 activation, f64[out*in] weight, f64[out] bias
//   | u32 C, u32 D, f64[C*D] classifier weight, f64[C] classifier bias
//   | u32 CRC32 of everything above
// All integers and floats little-endian; matrices row-major.

#include "ccar/error.hpp"
#include "ccar/nn.hpp"
#include "ccar/partition.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace ccar {

inline constexpr std::array<char, 8> kCheckpointMagic = {'C', 'C', 'A', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint32_t epoch = 0;
    std::string config; // echo of the producing config
};

struct Checkpoint {
    Model model;
    SubspacePartition partition;
    CheckpointMeta meta;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    template <typename M>
    void mat(const M& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
    std::vector<std::uint8_t>& data() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

    void need(std::size_t k) const {
        require(pos_ + k <= n_, Errc::CorruptCheckpoint, "checkpoint truncated");
    }
    std::uint8_t u8() { need(1); return p_[pos_++]; }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{p_[pos_++]} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{p_[pos_++]} << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), k);
        pos_ += k;
        return s;
    }
    Matrix mat(std::uint32_t rows, std::uint32_t cols) {
        need(std::size_t{rows} * cols * 8);
        Matrix m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }
    std::size_t remaining() const { return n_ - pos_; }

private:
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Model& model, const SubspacePartition& p,
                                                   const CheckpointMeta& meta) {
    require(model.feature_dim() == p.feature_dim() && model.num_classes() == p.num_classes(),
            Errc::IncompatibleShapes, "model and partition disagree on D or C");
    detail::ByteWriter w;
    w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.u32(kCheckpointVersion);
    w.u64(meta.seed);
    w.u32(meta.epoch);
    w.u32(static_cast<std::uint32_t>(p.feature_dim()));
    w.u32(static_cast<std::uint32_t>(p.num_classes()));
    w.u32(static_cast<std::uint32_t>(p.block_size()));
    w.u32(static_cast<std::uint32_t>(meta.config.size()));
    w.bytes(meta.config.data(), meta.config.size());
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& l : model.layers) {
        w.u32(static_cast<std::uint32_t>(l.out_dim()));
        w.u32(static_cast<std::uint32_t>(l.in_dim()));
        w.u8(static_cast<std::uint8_t>(l.activation));
        w.mat(l.weight);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) w.f64(l.bias[i]);
    }
    w.u32(static_cast<std::uint32_t>(model.num_classes()));
    w.u32(static_cast<std::uint32_t>(model.feature_dim()));
    w.mat(model.classifier_weight);
    for (Eigen::Index i = 0; i < model.classifier_bias.size(); ++i) w.f64(model.classifier_bias[i]);
    const std::uint32_t crc = detail::crc32_of(w.data().data(), w.data().size());
    w.u32(crc);
    return std::move(w.data());
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() >= kCheckpointMagic.size() + 4 + 4, Errc::CorruptCheckpoint, "checkpoint truncated");
    require(std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) == 0,
            Errc::CorruptCheckpoint, "bad checkpoint magic");
    detail::ByteReader hdr(bytes.data() + kCheckpointMagic.size(), 4);
    const std::uint32_t version = hdr.u32();
    require(version == kCheckpointVersion, Errc::VersionMismatch,
            "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));

    const std::size_t body = bytes.size() - 4;
    detail::ByteReader trailer(bytes.data() + body, 4);
    require(trailer.u32() == detail::crc32_of(bytes.data(), body), Errc::CorruptCheckpoint,
            "checkpoint checksum mismatch");

    detail::ByteReader r(bytes.data() + kCheckpointMagic.size() + 4, body - kCheckpointMagic.size() - 4);
    CheckpointMeta meta;
    meta.seed = r.u64();
    meta.epoch = r.u32();
    const auto d = r.u32();
    const auto c = r.u32();
    const auto k = r.u32();
    const auto cfg_len = r.u32();
    meta.config = r.str(cfg_len);
    require(c >= 2 && d >= c && k == d / c, Errc::CorruptCheckpoint, "inconsistent partition header");

    const auto n_layers = r.u32();
    std::vector<DenseLayer> layers;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        DenseLayer l;
        const auto out = r.u32();
        const auto in = r.u32();
        const auto act = r.u8();
        require(act <= 1, Errc::CorruptCheckpoint, "unknown activation tag");
        l.activation = static_cast<Activation>(act);
        l.weight = r.mat(out, in);
        l.bias = r.mat(out, 1);
        layers.push_back(std::move(l));
    }
    const auto wc = r.u32();
    const auto wd = r.u32();
    require(wc == c && wd == d, Errc::CorruptCheckpoint, "classifier shape disagrees with partition header");
    Matrix w = r.mat(wc, wd);
    Vector b = r.mat(wc, 1);
    require(r.remaining() == 0, Errc::CorruptCheckpoint, "trailing bytes in checkpoint");

    Model model;
    try {
        model = Model(std::move(layers), std::move(w), std::move(b));
    } catch (const Error& e) {
        throw Error(Errc::CorruptCheckpoint, e.what());
    }
    return Checkpoint{std::move(model), SubspacePartition(static_cast<int>(d), static_cast<int>(c)), std::move(meta)};
}

inline void save_checkpoint(const Model& model, const SubspacePartition& p, const CheckpointMeta& meta,
                            const std::string& path) {
    const auto bytes = encode_checkpoint(model, p, meta);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::Io, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), Errc::Io, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::Io, "cannot open " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

} // namespace ccar

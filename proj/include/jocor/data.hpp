#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "jocor/dataset.hpp"
#include "jocor/error.hpp"
#include "jocor/random.hpp"

namespace jocor {

// IDX container: 4-byte big-endian magic (0x00 0x00 <type> <ndims>), one
// 4-byte big-endian size per dimension, then the raw payload.
inline constexpr std::uint32_t kIdxUbyteImages = 0x00000803;
inline constexpr std::uint32_t kIdxUbyteLabels = 0x00000801;
inline constexpr std::uint8_t kIdxTypeUbyte = 0x08;
inline constexpr std::uint8_t kIdxTypeDouble = 0x0E;

struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;

    std::uint8_t type_code() const { return static_cast<std::uint8_t>((magic >> 8) & 0xffU); }
    std::size_t rank() const { return magic & 0xffU; }

    std::size_t element_size() const {
        switch (type_code()) {
            case 0x08:
            case 0x09: return 1;
            case 0x0B: return 2;
            case 0x0C:
            case 0x0D: return 4;
            case 0x0E: return 8;
            default: return 0;
        }
    }

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    std::uint64_t byte_size() const { return 4 + 4 * dims.size(); }
};

namespace detail {

struct GzCloser {
    void operator()(gzFile_s* f) const {
        if (f) gzclose(f);
    }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

/// Reads plain or gzip-compressed files; zlib sniffs the gzip magic bytes and
/// passes anything else through unchanged.
class IdxReader {
public:
    explicit IdxReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
        if (!file_) throw FormatError("cannot open " + path, 0);
        gzbuffer(file_.get(), 1 << 16);
    }

    std::uint64_t offset() const { return offset_; }

    std::uint32_t read_u32() {
        unsigned char b[4];
        read_exact(b, 4, "header");
        return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    }

    void read_exact(void* dst, std::size_t n, const char* what) {
        auto* out = static_cast<unsigned char*>(dst);
        while (n > 0) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
            const int got = gzread(file_.get(), out, chunk);
            if (got < 0) throw FormatError(path_ + ": read error", offset_);
            offset_ += static_cast<std::uint64_t>(got);
            if (got == 0) throw FormatError(path_ + ": truncated " + std::string(what), offset_);
            out += got;
            n -= static_cast<std::size_t>(got);
        }
    }

    bool at_eof() {
        unsigned char probe;
        return gzread(file_.get(), &probe, 1) == 0;
    }

    IdxHeader read_header() {
        IdxHeader h;
        h.magic = read_u32();
        if ((h.magic >> 16) != 0 || h.element_size() == 0 || h.rank() == 0) {
            throw FormatError(path_ + ": bad IDX magic 0x" + hex(h.magic), 0);
        }
        for (std::size_t k = 0; k < h.rank(); ++k) h.dims.push_back(read_u32());
        return h;
    }

    const std::string& path() const { return path_; }

    static std::string hex(std::uint32_t v) {
        static const char* digits = "0123456789abcdef";
        std::string s(8, '0');
        for (int i = 7; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xfU];
        return s;
    }

private:
    std::string path_;
    GzHandle file_;
    std::uint64_t offset_ = 0;
};

inline void expect_magic(const IdxHeader& h, std::uint32_t want, const std::string& path) {
    if (h.magic != want) {
        throw FormatError(path + ": IDX magic 0x" + IdxReader::hex(h.magic) + ", expected 0x" + IdxReader::hex(want), 0);
    }
}

}  // namespace detail

/// A whole IDX file: header plus raw payload bytes (big-endian for multi-byte types).
struct IdxFile {
    IdxHeader header;
    std::vector<std::uint8_t> payload;
};

inline IdxFile read_idx(const std::string& path) {
    detail::IdxReader in(path);
    IdxFile f;
    f.header = in.read_header();
    f.payload.resize(f.header.element_count() * f.header.element_size());
    in.read_exact(f.payload.data(), f.payload.size(), "payload");
    if (!in.at_eof()) throw FormatError(path + ": trailing bytes after payload", in.offset());
    return f;
}

/// Writes an IDX file, gzip-compressed when `gzip` is set.
inline void write_idx(const std::string& path, const IdxHeader& header, const std::vector<std::uint8_t>& payload,
                      bool gzip = false) {
    if (header.dims.size() != header.rank()) throw ConfigError("write_idx: rank in magic does not match dims");
    if (payload.size() != header.element_count() * header.element_size()) {
        throw ConfigError("write_idx: payload size does not match header dims");
    }
    detail::GzHandle f(gzopen(path.c_str(), gzip ? "wb6" : "wbT"));
    if (!f) throw ConfigError("write_idx: cannot open " + path + " for writing");

    std::vector<std::uint8_t> bytes;
    auto put_u32 = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) bytes.push_back(static_cast<std::uint8_t>((v >> s) & 0xffU));
    };
    put_u32(header.magic);
    for (auto d : header.dims) put_u32(d);
    bytes.insert(bytes.end(), payload.begin(), payload.end());

    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        const int wrote = gzwrite(f.get(), bytes.data() + done, chunk);
        if (wrote <= 0) throw ConfigError("write_idx: write failed for " + path);
        done += static_cast<std::size_t>(wrote);
    }
}

/// MNIST images and labels. Pixels are scaled by 1/255 with no centering.
/// `limit` reads only the first `limit` examples; the trailing payload is then
/// not checked.
inline LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path,
                                 std::optional<std::size_t> limit = std::nullopt) {
    detail::IdxReader images(images_path);
    const IdxHeader ih = images.read_header();
    detail::expect_magic(ih, kIdxUbyteImages, images_path);
    detail::IdxReader labels(labels_path);
    const IdxHeader lh = labels.read_header();
    detail::expect_magic(lh, kIdxUbyteLabels, labels_path);
    if (ih.dims[0] != lh.dims[0]) {
        throw FormatError(images_path + " has " + std::to_string(ih.dims[0]) + " images but " + labels_path + " has " +
                              std::to_string(lh.dims[0]) + " labels",
                          4);
    }

    const std::size_t available = ih.dims[0];
    const std::size_t n = limit ? std::min(*limit, available) : available;
    const std::size_t pixels = std::size_t{ih.dims[1]} * ih.dims[2];

    LabeledDataset data;
    data.class_count = 10;
    data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
    std::vector<std::uint8_t> row(pixels);
    for (std::size_t i = 0; i < n; ++i) {
        images.read_exact(row.data(), pixels, "image payload");
        for (std::size_t j = 0; j < pixels; ++j) {
            data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j] / 255.0;
        }
    }
    std::vector<std::uint8_t> raw(n);
    const std::uint64_t label_start = labels.offset();
    labels.read_exact(raw.data(), n, "label payload");
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i] >= 10) throw FormatError(labels_path + ": label " + std::to_string(raw[i]) + " >= 10", label_start + i);
        data.observed_labels.push_back(raw[i]);
    }
    if (!limit || *limit >= available) {
        if (!images.at_eof()) throw FormatError(images_path + ": trailing bytes after payload", images.offset());
        if (!labels.at_eof()) throw FormatError(labels_path + ": trailing bytes after payload", labels.offset());
    }
    data.true_labels = data.observed_labels;
    return data;
}

/// Gaussian blobs around seeded random centers.
struct SyntheticSpec {
    int class_count = 3;
    std::size_t per_class = 100;
    std::size_t dim = 2;
    double cluster_spread = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (class_count < 2) throw ConfigError("synthetic: class_count must be >= 2");
        if (per_class < 1) throw ConfigError("synthetic: per_class must be >= 1");
        if (dim < 1) throw ConfigError("synthetic: dim must be >= 1");
        if (!(cluster_spread >= 0.0) || !std::isfinite(cluster_spread)) {
            throw ConfigError("synthetic: cluster_spread must be finite and >= 0");
        }
    }
};

/// Centers have normal coordinates with scale max(1, M^(1/dim)); each new
/// center is redrawn until it lies at least unit distance from the earlier
/// ones. Each point is its center plus spread * standard-normal noise.
/// Examples are interleaved by class: 0, 1, ..., M-1, 0, 1, ...
inline LabeledDataset make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const auto dim = static_cast<Eigen::Index>(spec.dim);
    const double scale = std::max(1.0, std::pow(static_cast<double>(spec.class_count), 1.0 / static_cast<double>(spec.dim)));
    Matrix centers(spec.class_count, dim);
    for (int c = 0; c < spec.class_count; ++c) {
        bool separated = false;
        while (!separated) {
            for (Eigen::Index j = 0; j < dim; ++j) centers(c, j) = scale * rng.normal();
            separated = true;
            for (int o = 0; o < c; ++o) separated = separated && (centers.row(o) - centers.row(c)).norm() >= 1.0;
        }
    }

    LabeledDataset data;
    data.class_count = spec.class_count;
    const std::size_t n = spec.per_class * static_cast<std::size_t>(spec.class_count);
    data.features.resize(static_cast<Eigen::Index>(n), dim);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(spec.class_count));
        for (Eigen::Index j = 0; j < dim; ++j) {
            data.features(static_cast<Eigen::Index>(i), j) = centers(c, j) + spec.cluster_spread * rng.normal();
        }
        data.observed_labels.push_back(c);
    }
    data.true_labels = data.observed_labels;
    return data;
}

struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
};

/// Seeded shuffle, then consecutive blocks. Validation and test sizes are
/// floor(fraction * N); train takes the remainder. Every part keeps its true
/// labels, so the validation part can serve as a clean validation set.
inline DatasetSplit split(const LabeledDataset& data, const SplitFractions& fractions, std::uint64_t seed) {
    const double total = fractions.train + fractions.validation + fractions.test;
    if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 || std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must be nonnegative and sum to 1");
    }
    const std::size_t n = data.size();
    auto part = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
    const std::size_t n_val = part(fractions.validation);
    const std::size_t n_test = part(fractions.test);
    const std::size_t n_train = n - n_val - n_test;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    auto slice = [&](std::size_t from, std::size_t count) {
        return subset(data, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(from),
                                                     order.begin() + static_cast<std::ptrdiff_t>(from + count)));
    };
    return {slice(0, n_train), slice(n_train, n_val), slice(n_train + n_val, n_test)};
}

/// Feature matrix as a double IDX payload (type 0x0E, rank 2).
inline IdxFile features_to_idx(const Matrix& features) {
    IdxFile f;
    f.header.magic = (std::uint32_t{kIdxTypeDouble} << 8) | 2U;
    f.header.dims = {static_cast<std::uint32_t>(features.rows()), static_cast<std::uint32_t>(features.cols())};
    f.payload.reserve(static_cast<std::size_t>(features.size()) * 8);
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            std::uint64_t bits;
            const double v = features(r, c);
            std::memcpy(&bits, &v, 8);
            for (int s = 56; s >= 0; s -= 8) f.payload.push_back(static_cast<std::uint8_t>((bits >> s) & 0xffU));
        }
    }
    return f;
}

inline IdxFile labels_to_idx(const Labels& labels) {
    IdxFile f;
    f.header.magic = kIdxUbyteLabels;
    f.header.dims = {static_cast<std::uint32_t>(labels.size())};
    for (Label l : labels) {
        if (l < 0 || l > 255) throw DataError("labels_to_idx: label does not fit in a byte");
        f.payload.push_back(static_cast<std::uint8_t>(l));
    }
    return f;
}

}  // namespace jocor

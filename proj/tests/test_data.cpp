#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "jocor/adam.hpp"
#include "jocor/data.hpp"
#include "jocor/losses.hpp"
#include "jocor/mlp.hpp"

using namespace jocor;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("jocor_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                   ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

void write_images(const std::string& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count, bool gzip = false) {
    write_idx(path, IdxHeader{kIdxUbyteImages, {count, 28, 28}}, pixels, gzip);
}

void write_labels(const std::string& path, const std::vector<std::uint8_t>& labels, bool gzip = false) {
    write_idx(path, IdxHeader{kIdxUbyteLabels, {static_cast<std::uint32_t>(labels.size())}}, labels, gzip);
}

void write_raw(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(LoadMnist, AllZeroSingleImage) {
    TempDir dir;
    write_images(dir.file("img"), std::vector<std::uint8_t>(784, 0), 1);
    write_labels(dir.file("lbl"), {7});
    const LabeledDataset d = load_mnist(dir.file("img"), dir.file("lbl"));
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d.dim(), 784);
    EXPECT_EQ(d.class_count, 10);
    EXPECT_EQ(d.features.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(d.observed_labels, Labels{7});
    EXPECT_EQ(d.true_labels, Labels{7});
}

TEST(LoadMnist, RoundTripBytesPlainAndGzip) {
    TempDir dir;
    std::vector<std::uint8_t> pixels(3 * 784);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
    const std::vector<std::uint8_t> labels{0, 9, 4};
    for (bool gzip : {false, true}) {
        write_images(dir.file("img"), pixels, 3, gzip);
        write_labels(dir.file("lbl"), labels, gzip);
        const LabeledDataset d = load_mnist(dir.file("img"), dir.file("lbl"));
        ASSERT_EQ(d.size(), 3u);
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const double v = d.features(static_cast<Eigen::Index>(i / 784), static_cast<Eigen::Index>(i % 784));
            ASSERT_EQ(static_cast<std::uint8_t>(std::lround(v * 255.0)), pixels[i]);
        }
        EXPECT_EQ(d.observed_labels, (Labels{0, 9, 4}));

        const IdxFile raw = read_idx(dir.file("img"));
        EXPECT_EQ(raw.header.magic, kIdxUbyteImages);
        EXPECT_EQ(raw.header.dims, (std::vector<std::uint32_t>{3, 28, 28}));
        EXPECT_EQ(raw.payload, pixels);
    }
}

TEST(LoadMnist, NormalizationEndpoints) {
    TempDir dir;
    std::vector<std::uint8_t> pixels(784, 0);
    pixels[1] = 255;
    pixels[2] = 51;
    write_images(dir.file("img"), pixels, 1);
    write_labels(dir.file("lbl"), {1});
    const LabeledDataset d = load_mnist(dir.file("img"), dir.file("lbl"));
    EXPECT_EQ(d.features(0, 0), 0.0);
    EXPECT_EQ(d.features(0, 1), 1.0);
    EXPECT_EQ(d.features(0, 2), 0.2);
}

TEST(LoadMnist, LabelsFileWithImageMagic) {
    TempDir dir;
    write_images(dir.file("img"), std::vector<std::uint8_t>(784), 1);
    try {
        load_mnist(dir.file("img"), dir.file("img"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
        EXPECT_NE(std::string(e.what()).find("00000803"), std::string::npos);
    }
}

TEST(LoadMnist, TruncatedPayloadReportsOffset) {
    TempDir dir;
    std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
    bytes.resize(16 + 784 + 100, 0);
    write_raw(dir.file("img"), bytes);
    write_labels(dir.file("lbl"), {1, 2});
    try {
        load_mnist(dir.file("img"), dir.file("lbl"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 16u + 784 + 100);
    }
}

TEST(LoadMnist, CountMismatchAndBadLabel) {
    TempDir dir;
    write_images(dir.file("img"), std::vector<std::uint8_t>(2 * 784), 2);
    write_labels(dir.file("lbl"), {1});
    EXPECT_THROW(load_mnist(dir.file("img"), dir.file("lbl")), FormatError);

    write_labels(dir.file("lbl"), {1, 12});
    try {
        load_mnist(dir.file("img"), dir.file("lbl"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 9u);
    }
}

TEST(LoadMnist, GarbageMagicAndMissingFile) {
    TempDir dir;
    write_raw(dir.file("junk"), {0x12, 0x34, 0x56, 0x78, 0, 0, 0, 0});
    EXPECT_THROW(read_idx(dir.file("junk")), FormatError);
    EXPECT_THROW(load_mnist(dir.file("nope"), dir.file("nope2")), FormatError);
}

TEST(LoadMnist, TrailingBytesRejected) {
    TempDir dir;
    std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 1, 5, 6};
    write_raw(dir.file("lbl"), bytes);
    EXPECT_THROW(read_idx(dir.file("lbl")), FormatError);
}

TEST(LoadMnist, LimitReadsPrefix) {
    TempDir dir;
    std::vector<std::uint8_t> pixels(4 * 784);
    for (std::size_t i = 0; i < 4; ++i) pixels[i * 784] = static_cast<std::uint8_t>(10 * (i + 1));
    write_images(dir.file("img"), pixels, 4, true);
    write_labels(dir.file("lbl"), {3, 1, 4, 1}, true);
    const LabeledDataset d = load_mnist(dir.file("img"), dir.file("lbl"), 2);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.features(1, 0), 20.0 / 255.0);
    EXPECT_EQ(d.observed_labels, (Labels{3, 1}));
}

TEST(DoubleIdx, FeatureRoundTrip) {
    TempDir dir;
    const LabeledDataset d = make_synthetic(SyntheticSpec{3, 4, 5, 0.5, 9});
    const IdxFile f = features_to_idx(d.features);
    write_idx(dir.file("f.idx"), f.header, f.payload);
    const IdxFile back = read_idx(dir.file("f.idx"));
    EXPECT_EQ(back.header.magic, 0x00000E02u);
    EXPECT_EQ(back.payload, f.payload);
}

TEST(Synthetic, OnePerClass) {
    const LabeledDataset d = make_synthetic(SyntheticSpec{5, 1, 3, 0.1, 1});
    EXPECT_EQ(d.size(), 5u);
    EXPECT_EQ(d.observed_labels, (Labels{0, 1, 2, 3, 4}));
}

TEST(Synthetic, DeterministicBytes) {
    const SyntheticSpec s{4, 30, 6, 0.3, 17};
    const LabeledDataset a = make_synthetic(s), b = make_synthetic(s);
    ASSERT_EQ(a.features.size(), b.features.size());
    EXPECT_EQ(std::memcmp(a.features.data(), b.features.data(), sizeof(double) * static_cast<std::size_t>(a.features.size())), 0);
    EXPECT_EQ(a.true_labels, b.true_labels);
}

TEST(Synthetic, InvalidSpec) {
    EXPECT_THROW(make_synthetic(SyntheticSpec{1, 10, 2, 0.1, 0}), ConfigError);
    EXPECT_THROW(make_synthetic(SyntheticSpec{3, 0, 2, 0.1, 0}), ConfigError);
}

TEST(Synthetic, SmallSpreadTrainsToNinetyNinePercent) {
    const LabeledDataset d = make_synthetic(SyntheticSpec{3, 50, 2, 0.1, 3});
    MlpNetwork net = init_network({2, 16, 3}, 5);
    std::vector<std::size_t> all(d.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    AdamConfig cfg;
    cfg.learning_rate = 0.01;
    double accuracy = 0.0;
    int steps = 0;
    for (; steps < 200 && accuracy < 0.99; ++steps) {
        const ForwardTrace t = forward(net, d.features);
        adam_step(net, backward(net, t, cross_entropy_gradient(t.probabilities, d.observed_labels, all)), cfg);
        const Labels predicted = predict(net, d.features);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < d.size(); ++i) correct += predicted[i] == d.true_labels[i];
        accuracy = static_cast<double>(correct) / static_cast<double>(d.size());
    }
    EXPECT_GE(accuracy, 0.99) << "after " << steps << " steps";
}

TEST(Split, Sizes) {
    const LabeledDataset d = make_synthetic(SyntheticSpec{4, 250, 2, 1.0, 2});
    const DatasetSplit s = split(d, {0.8, 0.1, 0.1}, 3);
    EXPECT_EQ(s.train.size(), 800u);
    EXPECT_EQ(s.validation.size(), 100u);
    EXPECT_EQ(s.test.size(), 100u);
}

TEST(Split, EmptyValidationAllowed) {
    const LabeledDataset d = make_synthetic(SyntheticSpec{2, 50, 2, 1.0, 2});
    const DatasetSplit s = split(d, {0.9, 0.0, 0.1}, 3);
    EXPECT_TRUE(s.validation.empty());
    EXPECT_EQ(s.train.size() + s.test.size(), 100u);
}

TEST(Split, PartitionProperty) {
    // Tag each example with its index in feature column 0 to recover membership.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        LabeledDataset d = make_synthetic(SyntheticSpec{3, 37 + static_cast<std::size_t>(seed), 1, 1.0, seed});
        for (Eigen::Index i = 0; i < d.features.rows(); ++i) d.features(i, 0) = static_cast<double>(i);
        const DatasetSplit s = split(d, {0.6, 0.25, 0.15}, seed);
        std::multiset<long> seen;
        for (const auto* part : {&s.train, &s.validation, &s.test}) {
            for (Eigen::Index i = 0; i < part->features.rows(); ++i) seen.insert(std::lround(part->features(i, 0)));
        }
        ASSERT_EQ(seen.size(), d.size());
        long expect = 0;
        for (long v : seen) ASSERT_EQ(v, expect++);
    }
}

TEST(Split, DeterministicAndValidated) {
    const LabeledDataset d = make_synthetic(SyntheticSpec{3, 40, 2, 1.0, 2});
    EXPECT_EQ(split(d, {0.5, 0.25, 0.25}, 8).test.true_labels, split(d, {0.5, 0.25, 0.25}, 8).test.true_labels);
    EXPECT_THROW(split(d, {0.5, 0.5, 0.5}, 1), ConfigError);
}

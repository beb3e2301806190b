#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "vac/data.hpp"

using namespace vac;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::path("tmp_data_tests");
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("hand-built idx image bytes parse to the written pixels") {
    // Two 2x2 images; header: magic 0x803, n=2, h=2, w=2.
    std::vector<unsigned char> bytes;
    put_be32(bytes, kIdxImagesMagic);
    put_be32(bytes, 2);
    put_be32(bytes, 2);
    put_be32(bytes, 2);
    for (unsigned char b : {0, 51, 102, 153, 204, 255, 10, 20}) bytes.push_back(b);

    const Tensor<double> images = parse_idx_images<double>(bytes);
    REQUIRE(images.shape == std::vector<std::size_t>{2, 1, 2, 2});
    CHECK(images.at(0, 0, 0, 0) == 0.0);
    CHECK(images.at(0, 0, 0, 1) == Catch::Approx(51.0 / 255.0).epsilon(1e-15));
    CHECK(images.at(0, 0, 1, 0) == Catch::Approx(102.0 / 255.0).epsilon(1e-15));
    CHECK(images.at(0, 0, 1, 1) == Catch::Approx(153.0 / 255.0).epsilon(1e-15));
    CHECK(images.at(1, 0, 0, 1) == 1.0); // 255 maps to exactly 1.0
}

TEST_CASE("hand-built idx label bytes parse in order") {
    std::vector<unsigned char> bytes;
    put_be32(bytes, kIdxLabelsMagic);
    put_be32(bytes, 2);
    bytes.push_back(3);
    bytes.push_back(7);
    CHECK(parse_idx_labels(bytes) == std::vector<int>{3, 7});
}

TEST_CASE("wrong magic numbers are rejected") {
    std::vector<unsigned char> bytes;
    put_be32(bytes, 0);
    put_be32(bytes, 1);
    put_be32(bytes, 1);
    put_be32(bytes, 1);
    bytes.push_back(0);
    CHECK_THROWS_AS(parse_idx_images<double>(bytes), IoError);
    CHECK_THROWS_AS(parse_idx_labels(bytes), IoError);
}

TEST_CASE("truncated payloads are rejected") {
    std::vector<unsigned char> bytes;
    put_be32(bytes, kIdxImagesMagic);
    put_be32(bytes, 3); // declares 3 images
    put_be32(bytes, 2);
    put_be32(bytes, 2);
    for (int i = 0; i < 8; ++i) bytes.push_back(0); // payload for only 2
    CHECK_THROWS_AS(parse_idx_images<double>(bytes), IoError);

    std::vector<unsigned char> labels;
    put_be32(labels, kIdxLabelsMagic);
    put_be32(labels, 5);
    labels.push_back(1);
    CHECK_THROWS_AS(parse_idx_labels(labels), IoError);

    std::vector<unsigned char> stub{0x00};
    CHECK_THROWS_AS(parse_idx_images<double>(stub), IoError);
}

TEST_CASE("serializer round-trips u8-grid images losslessly") {
    Rng rng(800);
    Tensor<double> images({3, 1, 4, 5});
    for (auto& v : images.data) v = double(rng.integer(256)) / 255.0;

    const auto bytes = serialize_idx_images(images);
    const auto back = parse_idx_images<double>(bytes);
    REQUIRE(back.shape == images.shape);
    CHECK(back.data == images.data);

    std::vector<int> labels{0, 9, 255};
    CHECK(parse_idx_labels(serialize_idx_labels(labels)) == labels);
}

TEST_CASE("gzipped idx streams load transparently") {
    Rng rng(801);
    Tensor<double> images({2, 1, 3, 3});
    for (auto& v : images.data) v = double(rng.integer(256)) / 255.0;

    const auto plain = serialize_idx_images(images);
    const auto gz = gzip_compress(plain);
    REQUIRE(looks_gzipped(gz));
    CHECK(parse_idx_images<double>(gz).data == images.data);

    auto corrupt = gz;
    corrupt.resize(corrupt.size() / 2);
    CHECK_THROWS_AS(parse_idx_images<double>(corrupt), IoError);
}

TEST_CASE("dataset loader ties images to labels") {
    Rng rng(802);
    Tensor<double> images({4, 1, 3, 3});
    for (auto& v : images.data) v = double(rng.integer(256)) / 255.0;
    const std::vector<int> labels{0, 1, 0, 1};

    const auto ip = temp_file("imgs.idx");
    const auto lp = temp_file("labs.idx");
    write_file_bytes(ip.string(), serialize_idx_images(images));
    write_file_bytes(lp.string(), serialize_idx_labels(labels));

    const auto ds = load_idx_dataset<double>(ip.string(), lp.string(), "train", "fixture");
    CHECK(ds.size() == 4);
    CHECK(ds.labels == labels);
    CHECK(ds.split == "train");

    // Mismatched counts must not load.
    write_file_bytes(lp.string(), serialize_idx_labels({0, 1}));
    CHECK_THROWS_AS(load_idx_dataset<double>(ip.string(), lp.string(), "train", "fixture"),
                    IoError);
}

TEST_CASE("epoch batches cover every index exactly once") {
    BatchPlan plan{99, 2};
    const auto batches = batch_indices(4, plan, 0);
    REQUIRE(batches.size() == 2);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches)
        for (std::size_t i : b) seen.insert(i);
    CHECK(seen == std::multiset<std::size_t>{0, 1, 2, 3});

    // Short final batch keeps the tail.
    plan.batch_size = 3;
    const auto uneven = batch_indices(5, plan, 1);
    REQUIRE(uneven.size() == 2);
    CHECK(uneven[0].size() == 3);
    CHECK(uneven[1].size() == 2);

    plan.batch_size = 0;
    CHECK_THROWS_AS(batch_indices(4, plan, 0), ConfigError);
}

TEST_CASE("batch order is seed-stable and epoch-varying") {
    BatchPlan plan{5, 4};
    const auto a = batch_indices(16, plan, 0);
    const auto b = batch_indices(16, plan, 0);
    CHECK(a == b);

    const auto base = epoch_permutation(16, 5, 0);
    for (int epoch = 1; epoch <= 10; ++epoch)
        CHECK(epoch_permutation(16, 5, epoch) != base);

    CHECK(epoch_permutation(16, 6, 0) != base);
}

TEST_CASE("blob fixtures are balanced, template-exact at zero noise") {
    CHECK_THROWS_AS(synthetic_blobs<double>(3, 8, 1), ConfigError);

    const auto pair = synthetic_blobs<double>(2, 8, 1);
    CHECK(pair.labels == std::vector<int>{0, 1});

    const auto clean = synthetic_blobs<double>(4, 8, 2, /*noise_sigma=*/0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        const int label = clean.labels[int(i)];
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 8; ++c) {
                const bool bright = label == 0 ? (r < 4) : (r >= 4);
                CHECK(clean.images.at(i, 0, r, c) == (bright ? 0.9 : 0.1));
            }
    }
}

TEST_CASE("nearest neighbor separates fresh blob draws perfectly") {
    const auto train = synthetic_blobs<double>(20, 8, 3);
    const auto test = synthetic_blobs<double>(20, 8, 4);
    const std::size_t px = 64;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        double best = 1e300;
        int pred = -1;
        for (std::size_t j = 0; j < train.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t p = 0; p < px; ++p) {
                const double d = test.images[i * px + p] - train.images[j * px + p];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                pred = train.labels[j];
            }
        }
        if (pred == test.labels[i]) ++correct;
    }
    CHECK(correct == test.size());
}

TEST_CASE("synthetic digit corpus is labeled consistently") {
    const auto ds = synthetic_digits<double>(40, 11);
    REQUIRE(ds.images.shape == std::vector<std::size_t>{40, 1, 28, 28});
    for (std::size_t i = 0; i < 40; ++i) CHECK(ds.labels[i] == int(i % 10));
    for (double v : ds.images.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // Deterministic by seed.
    CHECK(synthetic_digits<double>(40, 11).images.data == ds.images.data);
    CHECK(synthetic_digits<double>(40, 12).images.data != ds.images.data);

    // Same-label glyphs cluster: a pixel nearest-neighbor over a modest
    // corpus classifies a fresh draw well above chance.
    const auto train = synthetic_digits<double>(300, 13);
    const auto test = synthetic_digits<double>(60, 14);
    const std::size_t px = 28 * 28;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        double best = 1e300;
        int pred = -1;
        for (std::size_t j = 0; j < train.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t p = 0; p < px; ++p) {
                const double d = test.images[i * px + p] - train.images[j * px + p];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                pred = train.labels[j];
            }
        }
        if (pred == test.labels[i]) ++correct;
    }
    CHECK(double(correct) / double(test.size()) > 0.85);
}

TEST_CASE("fashion corpus is distinct from digits and deterministic") {
    const auto fashion = synthetic_fashion<double>(20, 11);
    REQUIRE(fashion.images.shape == std::vector<std::size_t>{20, 1, 28, 28});
    CHECK(synthetic_fashion<double>(20, 11).images.data == fashion.images.data);
    CHECK(fashion.images.data != synthetic_digits<double>(20, 11).images.data);
    for (std::size_t i = 0; i < 20; ++i) CHECK(fashion.labels[i] == int(i % 10));
}

TEST_CASE("dataset validate and subset guard their inputs") {
    auto ds = synthetic_blobs<double>(4, 8, 5);
    CHECK_NOTHROW(ds.validate(2));
    CHECK_THROWS_AS(ds.validate(1), ConfigError); // label 1 out of range

    ds.labels[0] = -1;
    CHECK_THROWS_AS(ds.validate(2), ConfigError);

    auto good = synthetic_blobs<double>(4, 8, 5);
    CHECK_THROWS_AS(good.subset({9}), ConfigError);
    const auto sub = good.subset({2, 0});
    CHECK(sub.labels[0] == good.labels[2]);
    CHECK(sub.labels[1] == good.labels[0]);
    CHECK(good.head(2).size() == 2);
    CHECK(good.head(99).size() == 4);
}

#include "doctest.h"
#include "rlab/dataset.hpp"

#include <cstdio>
#include <fstream>

using namespace rlab;

namespace {

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

void put_be32(std::ofstream& o, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    o.write(b, 4);
}

/// Writes n 2x3 images (pixel j of image i = 10 i + j) and the given labels.
void write_fixture(const std::filesystem::path& ip, const std::filesystem::path& lp, const std::vector<int>& labels,
                   std::size_t drop_image_bytes = 0) {
    const std::uint32_t n = static_cast<std::uint32_t>(labels.size());
    {
        std::ofstream o(ip, std::ios::binary);
        put_be32(o, 0x00000803);
        put_be32(o, n);
        put_be32(o, 2);
        put_be32(o, 3);
        for (std::uint32_t i = 0; i < n; ++i)
            for (int j = 0; j < 6; ++j) {
                if (i + 1 == n && 6 - j <= static_cast<int>(drop_image_bytes)) break;
                o.put(static_cast<char>(10 * i + j));
            }
    }
    std::ofstream o(lp, std::ios::binary);
    put_be32(o, 0x00000801);
    put_be32(o, n);
    for (int l : labels) o.put(static_cast<char>(l));
}

}  // namespace

TEST_CASE("checkerboard") {
    const auto c = checkerboard(256);
    double sum = 0;
    for (std::size_t r = 0; r < 256; ++r)
        for (std::size_t k = 0; k < 256; ++k) {
            CHECK((c(r, k) == 1.0 || c(r, k) == -1.0));
            if (k + 1 < 256) CHECK(c(r, k) == -c(r, k + 1));
            sum += c(r, k);
        }
    CHECK(sum == 0.0);
    const auto d = synth_dataset(SynthKind::Checkerboard, 2, 8, 0);
    CHECK(d.size() == 2);
    CHECK(d.images[1] == checkerboard(8));
}

TEST_CASE("stripes vs blobs") {
    const auto a = synth_dataset(SynthKind::StripesVsBlobs, 11, 12, 42);
    const auto b = synth_dataset(SynthKind::StripesVsBlobs, 11, 12, 42);
    const auto c = synth_dataset(SynthKind::StripesVsBlobs, 11, 12, 43);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.images == c.images);
    int ones = 0;
    for (int l : a.labels) ones += l;
    CHECK(std::abs(2 * ones - 11) <= 1);
    for (const auto& im : a.images)
        for (double v : im.values()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(parse_synth_kind("stripes_vs_blobs") == SynthKind::StripesVsBlobs);
    CHECK_THROWS_AS(parse_synth_kind("mnist"), std::invalid_argument);
}

TEST_CASE("idx round trip") {
    const auto ip = tmp("rlab_idx_images"), lp = tmp("rlab_idx_labels");
    write_fixture(ip, lp, {0, 1});
    const auto d = load_idx(ip, lp);
    REQUIRE(d.size() == 2);
    CHECK(d.labels == std::vector<int>{0, 1});
    CHECK(d.images[0].rows() == 2);
    CHECK(d.images[0].cols() == 3);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 6; ++j) CHECK(d.images[i].values()[j] == (10.0 * i + j) / 255.0);

    write_fixture(ip, lp, {0, 2, 1});
    const auto f = load_idx(ip, lp, {0, 1});
    CHECK(f.labels == std::vector<int>{0, 1});
    CHECK(f.images[1].values()[0] == 20.0 / 255.0);
}

TEST_CASE("idx errors") {
    const auto ip = tmp("rlab_idx_images_bad"), lp = tmp("rlab_idx_labels_bad");
    write_fixture(ip, lp, {0, 1}, 2);
    try {
        load_idx(ip, lp);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 28 bytes") != std::string::npos);
        CHECK(msg.find("got 26") != std::string::npos);
    }
    write_fixture(ip, lp, {0, 1});
    CHECK_THROWS_AS(load_idx(lp, lp), std::runtime_error);  // label magic on the image file
    CHECK_THROWS_AS(load_idx(ip, tmp("rlab_idx_missing")), std::runtime_error);
}

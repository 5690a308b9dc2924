#include "rlab/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <stdexcept>

namespace rlab {

std::string to_string(SynthKind k) {
    return k == SynthKind::Checkerboard ? "checkerboard" : "stripes_vs_blobs";
}

SynthKind parse_synth_kind(const std::string& s) {
    if (s == "checkerboard") return SynthKind::Checkerboard;
    if (s == "stripes_vs_blobs") return SynthKind::StripesVsBlobs;
    throw std::invalid_argument("unknown dataset kind '" + s + "' (expected checkerboard or stripes_vs_blobs)");
}

Field2D<double> checkerboard(std::size_t size) {
    Field2D<double> f(size, size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) f(r, c) = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    return f;
}

namespace {

Field2D<double> stripes(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double theta = std::numbers::pi * u(rng);
    const double period = 3.0 + 3.0 * u(rng);
    const double phase = 2.0 * std::numbers::pi * u(rng);
    const double cx = std::cos(theta), cy = std::sin(theta);
    Field2D<double> f(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double s = (static_cast<double>(c) * cx + static_cast<double>(r) * cy) / period;
            f(r, c) = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s + phase);
        }
    return f;
}

Field2D<double> blobs(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int count = 1 + static_cast<int>(rng() % 3);
    Field2D<double> f(n, n, 0.0);
    const double extent = static_cast<double>(n);
    for (int b = 0; b < count; ++b) {
        const double r0 = extent * (0.2 + 0.6 * u(rng)), c0 = extent * (0.2 + 0.6 * u(rng));
        const double sigma = 1.5 + 1.5 * u(rng);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(c) - c0;
                f(r, c) += std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
            }
    }
    for (auto& v : f.storage()) v = std::min(v, 1.0);
    return f;
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

void expect_length(const std::filesystem::path& p, std::size_t expected, std::size_t actual) {
    if (expected != actual)
        throw std::runtime_error(p.string() + ": expected " + std::to_string(expected) + " bytes, got " +
                                 std::to_string(actual));
}

}  // namespace

Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t size, std::uint64_t seed) {
    if (size == 0) throw std::invalid_argument("synth_dataset: size must be > 0");
    Dataset d;
    if (kind == SynthKind::Checkerboard) {
        for (std::size_t i = 0; i < n; ++i) {
            d.images.push_back(checkerboard(size));
            d.labels.push_back(1);
        }
        return d;
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = (i % 2 == 0) ? 1 : 0;
        d.images.push_back(label == 1 ? stripes(size, rng) : blobs(size, rng));
        d.labels.push_back(label);
    }
    return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::set<int>& keep) {
    const auto ib = slurp(images);
    const auto lb = slurp(labels);
    if (ib.size() < 16) expect_length(images, 16, ib.size());
    if (lb.size() < 8) expect_length(labels, 8, lb.size());
    if (be32(ib, 0) != 0x00000803) throw std::runtime_error(images.string() + ": bad magic (expected 0x00000803)");
    if (be32(lb, 0) != 0x00000801) throw std::runtime_error(labels.string() + ": bad magic (expected 0x00000801)");

    const std::size_t n = be32(ib, 4), rows = be32(ib, 8), cols = be32(ib, 12);
    const std::size_t nl = be32(lb, 4);
    expect_length(images, 16 + n * rows * cols, ib.size());
    expect_length(labels, 8 + nl, lb.size());
    if (n != nl)
        throw std::runtime_error("idx: " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");

    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = lb[8 + i];
        if (!keep.empty() && !keep.contains(label)) continue;
        Field2D<double> f(rows, cols);
        const std::size_t base = 16 + i * rows * cols;
        for (std::size_t j = 0; j < rows * cols; ++j) f.storage()[j] = ib[base + j] / 255.0;
        d.images.push_back(std::move(f));
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace rlab

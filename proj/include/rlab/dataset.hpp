#pragma once

#include "rlab/numkit.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace rlab {

/// Labelled single-channel images, order preserved.
struct Dataset {
    std::vector<Field2D<double>> images;
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

enum class SynthKind { Checkerboard, StripesVsBlobs };

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

/// 256x256-style +-1 checkerboard, top-left +1.
Field2D<double> checkerboard(std::size_t size);

/// checkerboard: n copies of the checkerboard, label 1.
/// stripes_vs_blobs: label 1 images hold a random-phase, random-orientation
/// stripe pattern; label 0 images hold 1-3 Gaussian blobs. Labels alternate,
/// so classes are balanced within one. Values lie in [0, 1].
Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t size, std::uint64_t seed);

/// IDX images (magic 0x00000803, u8 pixels scaled by 1/255) and labels
/// (magic 0x00000801), keeping only the labels in `keep` (all when empty).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::set<int>& keep = {});

}  // namespace rlab

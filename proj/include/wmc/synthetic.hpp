#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmc/data_io.hpp"

namespace wmc {

/// Class-correlated toy data: each class owns a colour and a set of body-map
/// locations. Images are noisy backgrounds with one coloured square at a
/// random position; a fraction of samples take a location from another class.
struct SyntheticOptions {
    std::size_t samples = 64;
    std::vector<std::string> classes{"D", "P", "S", "V"};
    Index image_size = 32;
    double location_noise = 0.1;
    std::uint64_t seed = 7;
};

struct SyntheticSample {
    Tensor image;
    ManifestRecord record;
};

std::vector<SyntheticSample> generate_synthetic(const SyntheticOptions& options);

/// Writes images/NNN.wimg, manifest.csv, bodymap.csv (the sample map) and
/// dataset.cfg (image_size, classes) under `dir`; returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options);

}  // namespace wmc

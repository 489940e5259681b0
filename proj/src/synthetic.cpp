#include "wmc/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "wmc/random.hpp"

namespace wmc {

namespace {

// RGB per class slot.
constexpr double kPalette[6][3] = {{0.9, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.2, 0.9},
                                   {0.9, 0.8, 0.1}, {0.8, 0.1, 0.8}, {0.1, 0.8, 0.8}};

// Four raw locations per class slot. Slot 0 includes 437, which the sample
// body map folds into 436.
constexpr int kLocations[6][4] = {{436, 437, 330, 331}, {340, 341, 342, 343}, {350, 351, 352, 353},
                                  {360, 361, 362, 363}, {370, 371, 372, 373}, {380, 381, 382, 383}};

}  // namespace

std::vector<SyntheticSample> generate_synthetic(const SyntheticOptions& options) {
    const std::size_t n_classes = options.classes.size();
    if (n_classes < 2 || n_classes > 6) throw ConfigError("synthetic data supports 2 to 6 classes");
    if (options.image_size < 8) throw ConfigError("synthetic images must be at least 8 pixels");
    Rng rng(options.seed);
    std::vector<SyntheticSample> out;
    const Index S = options.image_size;
    const Index blob = std::max<Index>(S / 3, 2);
    for (std::size_t n = 0; n < options.samples; ++n) {
        const std::size_t cls = n % n_classes;
        Tensor image({3, S, S});
        for (Index k = 0; k < image.size(); ++k) image[k] = 0.15 * rng.uniform();
        const Index y0 = Index(rng.below(std::uint64_t(S - blob + 1)));
        const Index x0 = Index(rng.below(std::uint64_t(S - blob + 1)));
        for (Index c = 0; c < 3; ++c)
            for (Index y = y0; y < y0 + blob; ++y)
                for (Index x = x0; x < x0 + blob; ++x)
                    image[(c * S + y) * S + x] = std::clamp(kPalette[cls][c] + 0.1 * (rng.uniform() - 0.5), 0.0, 1.0);

        std::size_t loc_class = cls;
        if (rng.uniform() < options.location_noise) loc_class = (cls + 1 + rng.below(n_classes - 1)) % n_classes;
        const int location = kLocations[loc_class][rng.below(4)];

        char name[32];
        std::snprintf(name, sizeof name, "images/%03zu.wimg", n);
        out.push_back({std::move(image), ManifestRecord{name, options.classes[cls], location}});
    }
    return out;
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options) {
    const auto samples = generate_synthetic(options);
    std::vector<ManifestRecord> records;
    for (const auto& s : samples) {
        write_raster(dir / s.record.image_path, s.image);
        records.push_back(s.record);
    }
    const auto manifest = dir / "manifest.csv";
    write_manifest(manifest, records);
    write_file(dir / "bodymap.csv", sample_body_map().to_csv());
    std::string classes;
    for (const auto& c : options.classes) classes += (classes.empty() ? "" : ",") + c;
    write_file(dir / "dataset.cfg", "# settings matching this dataset\nimage_size = " +
                                        std::to_string(options.image_size) + "\nclasses = " + classes + "\n");
    return manifest;
}

}  // namespace wmc

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wmc/tensor.hpp"

namespace wmc {

/// Wound class tokens accepted anywhere a label is read.
const std::vector<std::string>& known_class_tokens();

/// Parses a comma-separated class list such as "D,P,S,V". Tokens must be
/// known, unique, and at least two.
std::vector<std::string> parse_class_set(const std::string& text);

inline constexpr int kRawLocationCount = 484;
inline constexpr int kSimplifiedLocationCount = 323;

struct ManifestRecord {
    std::string image_path;
    std::string label;
    int raw_location_id = 0;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Reads `image_path,label,raw_location_id` rows. Every invalid row is
/// reported in one IngestError. Relative image paths are kept as written.
/// With a non-empty `class_set`, labels outside it are rejected too.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          const std::vector<std::string>& class_set = {});
std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::vector<std::string>& class_set = {});

std::string format_manifest(const std::vector<ManifestRecord>& records);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Raw body-map region -> simplified region.
class BodyMap {
public:
    /// Identity over [1, raw_count].
    static BodyMap identity(int raw_count = kRawLocationCount);

    /// Builds from explicit pairs and checks totality over [1, raw_count],
    /// idempotence on simplified IDs, and codomain size.
    BodyMap(const std::map<int, int>& mapping, int raw_count, int simplified_count);

    static BodyMap load(const std::filesystem::path& path, int raw_count = kRawLocationCount,
                        int simplified_count = kSimplifiedLocationCount);
    static BodyMap parse(const std::string& text, int raw_count = kRawLocationCount,
                         int simplified_count = kSimplifiedLocationCount);

    int raw_count() const { return raw_count_; }
    int simplified_count() const { return int(simplified_ids_.size()); }

    int simplify(int raw_id) const;
    /// Dense 0-based index of a simplified ID, for one-hot encoding.
    Index index_of_simplified(int simplified_id) const;
    /// simplify() followed by index_of_simplified().
    Index encode(int raw_id) const { return index_of_simplified(simplify(raw_id)); }

    const std::vector<int>& simplified_ids() const { return simplified_ids_; }
    std::string to_csv() const;

private:
    BodyMap() = default;

    int raw_count_ = 0;
    std::vector<int> table_;  // table_[raw_id] = simplified id, index 0 unused
    std::vector<int> simplified_ids_;
    std::map<int, Index> dense_index_;
};

/// The documented merges ({436,437,438} -> 436, {390..393} -> 390) plus
/// placeholder pair merges (2k-1, 2k) -> 2k-1 for k = 1..156, giving 323
/// simplified regions. Replace with the clinical table when available.
BodyMap sample_body_map();

// Raster files: "WIMG", u32 version, u64 channels/height/width, f32 samples,
// channel-major then row-major, all little-endian.
inline constexpr std::uint32_t kRasterVersion = 1;

void write_raster(const std::filesystem::path& path, const Tensor& image);
Tensor read_raster(const std::filesystem::path& path);
std::string encode_raster(const Tensor& image);
Tensor decode_raster(const std::string& bytes, const std::string& origin = "<memory>");

/// Bilinear resize of [C x H x W] maps (half-pixel centres, edge clamped).
Tensor resize_bilinear(const Tensor& image, Index height, Index width);

/// Loads a RasterFile, JPEG or PNG as [3 x size x size] in [0, 1].
/// Rasters that already match are returned bit-identical.
Tensor ingest_image(const std::filesystem::path& path, Index size = 224);

struct AugmentPolicy {
    bool horizontal_flip = true;
    bool vertical_flip = true;
    bool rotate90 = true;

    static AugmentPolicy identity() { return {false, false, false}; }
};

Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
/// Quarter turns counter-clockwise; square images only for odd counts.
Tensor rotate90(const Tensor& image, int quarter_turns);

/// Seeded flips/rotation; deterministic per (seed, index).
Tensor augment(const Tensor& image, const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t index);

/// Seeded shuffle of [0, n) split into (train, test) with round(n * fraction) train items.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed);

// Checkpoints: "WMCK", u32 version, u32 tensor count, then per tensor a u32
// name length, UTF-8 name, u32 rank, u64 dims, f64 values; little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace wmc

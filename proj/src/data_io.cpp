#include "wmc/data_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "wmc/random.hpp"

namespace wmc {

const std::vector<std::string>& known_class_tokens() {
    static const std::vector<std::string> tokens{"D", "P", "S", "V", "N", "BG"};
    return tokens;
}

namespace {

bool is_known_class(const std::string& token) {
    const auto& k = known_class_tokens();
    return std::find(k.begin(), k.end(), token) != k.end();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::optional<long> parse_int(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t used = 0;
    try {
        const long v = std::stol(s, &used);
        if (used != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::vector<std::string> parse_class_set(const std::string& text) {
    std::vector<std::string> classes;
    for (const std::string& token : split_commas(text)) {
        if (token.empty()) throw ConfigError("empty class token in '" + text + "'");
        if (!is_known_class(token)) throw ConfigError("unknown class token '" + token + "'");
        if (std::find(classes.begin(), classes.end(), token) != classes.end())
            throw ConfigError("duplicate class token '" + token + "'");
        classes.push_back(token);
    }
    if (classes.size() < 2) throw ConfigError("a class set needs at least two classes, got '" + text + "'");
    return classes;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IngestError("write failed for " + path.string());
}

// Manifest --------------------------------------------------------------------

std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::vector<std::string>& class_set) {
    const auto lines = lines_of(text);
    if (lines.empty() || trim(lines[0]) != "image_path,label,raw_location_id")
        throw IngestError("manifest must start with header 'image_path,label,raw_location_id'");

    std::vector<ManifestRecord> records;
    std::vector<std::string> problems;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (trim(lines[n]).empty()) continue;
        const std::string row = "row " + std::to_string(n + 1) + ": ";
        const auto fields = split_commas(lines[n]);
        if (fields.size() != 3) {
            problems.push_back(row + "expected 3 fields, got " + std::to_string(fields.size()));
            continue;
        }
        ManifestRecord rec{fields[0], fields[1], 0};
        bool ok = true;
        if (rec.image_path.empty()) {
            problems.push_back(row + "empty image path");
            ok = false;
        }
        if (!is_known_class(rec.label)) {
            problems.push_back(row + "unknown label '" + rec.label + "'");
            ok = false;
        } else if (!class_set.empty() && std::find(class_set.begin(), class_set.end(), rec.label) == class_set.end()) {
            problems.push_back(row + "label '" + rec.label + "' is not in the active class set");
            ok = false;
        }
        const auto loc = parse_int(fields[2]);
        if (!loc) {
            problems.push_back(row + "location '" + fields[2] + "' is not an integer");
            ok = false;
        } else if (*loc < 1 || *loc > kRawLocationCount) {
            problems.push_back(row + "location " + fields[2] + " outside [1, " + std::to_string(kRawLocationCount) + "]");
            ok = false;
        } else {
            rec.raw_location_id = int(*loc);
        }
        if (ok) records.push_back(std::move(rec));
    }
    if (!problems.empty()) {
        std::string msg = "manifest has " + std::to_string(problems.size()) + " invalid row(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw IngestError(msg);
    }
    return records;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path, const std::vector<std::string>& class_set) {
    if (!std::filesystem::exists(path)) throw IngestError("manifest not found: " + path.string());
    try {
        return parse_manifest(read_file(path), class_set);
    } catch (const IngestError& e) {
        throw IngestError(path.string() + ": " + e.what());
    }
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
    std::string out = "image_path,label,raw_location_id\n";
    for (const auto& r : records) out += r.image_path + "," + r.label + "," + std::to_string(r.raw_location_id) + "\n";
    return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
    write_file(path, format_manifest(records));
}

// Body map --------------------------------------------------------------------

BodyMap BodyMap::identity(int raw_count) {
    std::map<int, int> m;
    for (int r = 1; r <= raw_count; ++r) m[r] = r;
    return BodyMap(m, raw_count, raw_count);
}

BodyMap::BodyMap(const std::map<int, int>& mapping, int raw_count, int simplified_count) : raw_count_(raw_count) {
    if (raw_count < 1 || simplified_count < 1) throw IngestError("body map sizes must be positive");
    std::vector<std::string> problems;
    table_.assign(std::size_t(raw_count) + 1, 0);
    for (const auto& [raw, simple] : mapping) {
        if (raw < 1 || raw > raw_count) {
            problems.push_back("raw ID " + std::to_string(raw) + " outside [1, " + std::to_string(raw_count) + "]");
            continue;
        }
        if (simple < 1 || simple > raw_count) {
            problems.push_back("raw ID " + std::to_string(raw) + " maps to out-of-range ID " + std::to_string(simple));
            continue;
        }
        table_[std::size_t(raw)] = simple;
    }
    for (int r = 1; r <= raw_count; ++r)
        if (table_[std::size_t(r)] == 0) problems.push_back("raw ID " + std::to_string(r) + " is unmapped");

    std::set<int> codomain;
    for (int r = 1; r <= raw_count; ++r)
        if (int s = table_[std::size_t(r)]; s != 0) codomain.insert(s);
    for (int s : codomain)
        if (table_[std::size_t(s)] != s)
            problems.push_back("simplified ID " + std::to_string(s) + " maps to " +
                               std::to_string(table_[std::size_t(s)]) + " instead of itself");
    if (int(codomain.size()) != simplified_count)
        problems.push_back("mapping has " + std::to_string(codomain.size()) + " simplified IDs, expected " +
                           std::to_string(simplified_count));
    if (!problems.empty()) {
        std::string msg = "body map integrity check failed:";
        for (std::size_t k = 0; k < problems.size() && k < 20; ++k) msg += "\n  " + problems[k];
        if (problems.size() > 20) msg += "\n  ... " + std::to_string(problems.size() - 20) + " more";
        throw IngestError(msg);
    }
    simplified_ids_.assign(codomain.begin(), codomain.end());
    for (std::size_t k = 0; k < simplified_ids_.size(); ++k) dense_index_[simplified_ids_[k]] = Index(k);
}

BodyMap BodyMap::parse(const std::string& text, int raw_count, int simplified_count) {
    const auto lines = lines_of(text);
    if (lines.empty() || trim(lines[0]) != "raw_id,simplified_id")
        throw IngestError("body map must start with header 'raw_id,simplified_id'");
    std::map<int, int> mapping;
    std::vector<std::string> problems;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (trim(lines[n]).empty()) continue;
        const auto fields = split_commas(lines[n]);
        const auto raw = fields.size() == 2 ? parse_int(fields[0]) : std::nullopt;
        const auto simple = fields.size() == 2 ? parse_int(fields[1]) : std::nullopt;
        if (!raw || !simple) {
            problems.push_back("row " + std::to_string(n + 1) + ": expected two integers");
            continue;
        }
        if (!mapping.emplace(int(*raw), int(*simple)).second)
            problems.push_back("row " + std::to_string(n + 1) + ": raw ID " + std::to_string(*raw) + " mapped twice");
    }
    if (!problems.empty()) {
        std::string msg = "body map is malformed:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw IngestError(msg);
    }
    return BodyMap(mapping, raw_count, simplified_count);
}

BodyMap BodyMap::load(const std::filesystem::path& path, int raw_count, int simplified_count) {
    if (!std::filesystem::exists(path)) throw IngestError("body map not found: " + path.string());
    try {
        return parse(read_file(path), raw_count, simplified_count);
    } catch (const IngestError& e) {
        throw IngestError(path.string() + ": " + e.what());
    }
}

int BodyMap::simplify(int raw_id) const {
    if (raw_id < 1 || raw_id > raw_count_ || table_[std::size_t(raw_id)] == 0)
        throw IngestError("body map has no entry for raw location " + std::to_string(raw_id));
    return table_[std::size_t(raw_id)];
}

Index BodyMap::index_of_simplified(int simplified_id) const {
    const auto it = dense_index_.find(simplified_id);
    if (it == dense_index_.end())
        throw IngestError("location " + std::to_string(simplified_id) + " is not a simplified body-map ID");
    return it->second;
}

std::string BodyMap::to_csv() const {
    std::string out = "raw_id,simplified_id\n";
    for (int r = 1; r <= raw_count_; ++r) out += std::to_string(r) + "," + std::to_string(table_[std::size_t(r)]) + "\n";
    return out;
}

BodyMap sample_body_map() {
    std::map<int, int> m;
    for (int r = 1; r <= kRawLocationCount; ++r) m[r] = r;
    for (int r : {437, 438}) m[r] = 436;
    for (int r : {391, 392, 393}) m[r] = 390;
    for (int k = 1; k <= 156; ++k) m[2 * k] = 2 * k - 1;
    return BodyMap(m, kRawLocationCount, kSimplifiedLocationCount);
}

// Little-endian byte streams ---------------------------------------------------

namespace {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void le(T v) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        U u;
        std::memcpy(&u, &v, sizeof(T));
        for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(char((u >> (8 * k)) & 0xFF));
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T>
    T le(const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        need(sizeof(T), what);
        U u = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k) u |= U(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, &u, sizeof(T));
        return v;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError(origin_ + ": " + msg + " at offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            fail(std::string("truncated while reading ") + what + " (need " + std::to_string(n) + " bytes, have " +
                 std::to_string(bytes_.size() - pos_) + ")");
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

// Raster ------------------------------------------------------------------------

std::string encode_raster(const Tensor& image) {
    if (image.rank() != 3) throw DimensionError("raster images must be [C x H x W], got " + shape_string(image.shape()));
    ByteWriter w;
    w.bytes("WIMG", 4);
    w.le<std::uint32_t>(kRasterVersion);
    for (Index d : image.shape()) w.le<std::uint64_t>(std::uint64_t(d));
    for (Index k = 0; k < image.size(); ++k) w.le<float>(float(image[k]));
    return w.take();
}

Tensor decode_raster(const std::string& bytes, const std::string& origin) {
    ByteReader r(bytes, origin);
    if (r.bytes(4, "magic") != "WIMG") {
        throw FormatError(origin + ": bad raster magic at offset 0");
    }
    const auto version = r.le<std::uint32_t>("version");
    if (version != kRasterVersion)
        r.fail("unsupported raster version " + std::to_string(version));
    Shape shape;
    for (const char* what : {"channels", "height", "width"}) {
        const auto d = r.le<std::uint64_t>(what);
        if (d == 0 || d > (1ull << 24)) r.fail(std::string("invalid ") + what + " " + std::to_string(d));
        shape.push_back(Index(d));
    }
    Tensor t(shape);
    for (Index k = 0; k < t.size(); ++k) t[k] = double(r.le<float>("samples"));
    if (!r.at_end()) r.fail("trailing bytes after raster payload");
    return t;
}

void write_raster(const std::filesystem::path& path, const Tensor& image) { write_file(path, encode_raster(image)); }

Tensor read_raster(const std::filesystem::path& path) { return decode_raster(read_file(path), path.string()); }

Tensor resize_bilinear(const Tensor& image, Index height, Index width) {
    if (image.rank() != 3) throw DimensionError("resize expects [C x H x W], got " + shape_string(image.shape()));
    const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (H == height && W == width) return image;
    Tensor out({C, height, width});
    auto source = [](Index dst, Index in, Index outn) {
        const double s = (double(dst) + 0.5) * double(in) / double(outn) - 0.5;
        return std::clamp(s, 0.0, double(in - 1));
    };
    for (Index y = 0; y < height; ++y) {
        const double sy = source(y, H, height);
        const Index y0 = Index(std::floor(sy)), y1 = std::min(y0 + 1, H - 1);
        const double fy = sy - double(y0);
        for (Index x = 0; x < width; ++x) {
            const double sx = source(x, W, width);
            const Index x0 = Index(std::floor(sx)), x1 = std::min(x0 + 1, W - 1);
            const double fx = sx - double(x0);
            for (Index c = 0; c < C; ++c) {
                auto at = [&](Index yy, Index xx) { return image[(c * H + yy) * W + xx]; };
                const double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
                const double bottom = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
                out[(c * height + y) * width + x] = top * (1 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor ingest_image(const std::filesystem::path& path, Index size) {
    if (!std::filesystem::exists(path)) throw IngestError("image not found: " + path.string());
    const std::string bytes = read_file(path);
    Tensor image;
    if (bytes.size() >= 4 && bytes.compare(0, 4, "WIMG") == 0) {
        try {
            image = decode_raster(bytes, path.string());
        } catch (const FormatError& e) {
            throw IngestError(std::string("cannot decode raster: ") + e.what());
        }
        if (image.dim(0) != 3)
            throw IngestError(path.string() + ": expected 3 channels, got " + std::to_string(image.dim(0)));
    } else {
        const std::vector<uchar> buffer(bytes.begin(), bytes.end());
        cv::Mat decoded;
        try {
            decoded = cv::imdecode(buffer, cv::IMREAD_COLOR);
        } catch (const cv::Exception&) {
            decoded.release();
        }
        if (decoded.empty() || decoded.type() != CV_8UC3)
            throw IngestError("cannot decode image " + path.string());
        const Index H = decoded.rows, W = decoded.cols;
        image = Tensor({3, H, W});
        for (Index y = 0; y < H; ++y) {
            const auto* row = decoded.ptr<cv::Vec3b>(int(y));
            for (Index x = 0; x < W; ++x)
                for (Index c = 0; c < 3; ++c)  // OpenCV stores BGR
                    image[(c * H + y) * W + x] = double(row[x][int(2 - c)]) / 255.0;
        }
    }
    return resize_bilinear(image, size, size);
}

// Augmentation ---------------------------------------------------------------------

Tensor flip_horizontal(const Tensor& image) {
    Tensor out(image.shape());
    const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
    for (Index c = 0; c < C; ++c)
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) out[(c * H + y) * W + x] = image[(c * H + y) * W + (W - 1 - x)];
    return out;
}

Tensor flip_vertical(const Tensor& image) {
    Tensor out(image.shape());
    const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
    for (Index c = 0; c < C; ++c)
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) out[(c * H + y) * W + x] = image[(c * H + (H - 1 - y)) * W + x];
    return out;
}

Tensor rotate90(const Tensor& image, int quarter_turns) {
    quarter_turns = ((quarter_turns % 4) + 4) % 4;
    Tensor cur = image;
    for (int t = 0; t < quarter_turns; ++t) {
        const Index C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
        Tensor next({C, W, H});
        for (Index c = 0; c < C; ++c)
            for (Index r = 0; r < W; ++r)
                for (Index q = 0; q < H; ++q) next[(c * W + r) * H + q] = cur[(c * H + q) * W + (W - 1 - r)];
        cur = std::move(next);
    }
    return cur;
}

Tensor augment(const Tensor& image, const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t index) {
    if (image.rank() != 3) throw DimensionError("augment expects [C x H x W], got " + shape_string(image.shape()));
    Rng rng = Rng::derive(seed, index);
    const bool hflip = rng.uniform() < 0.5;
    const bool vflip = rng.uniform() < 0.5;
    int turns = int(rng.below(4));
    if (image.dim(1) != image.dim(2)) turns &= ~1;  // keep the shape
    Tensor out = image;
    if (policy.horizontal_flip && hflip) out = flip_horizontal(out);
    if (policy.vertical_flip && vflip) out = flip_vertical(out);
    if (policy.rotate90 && turns) out = rotate90(out, turns);
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw ConfigError("train split fraction must be in (0, 1], got " + std::to_string(train_fraction));
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = k;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_train = std::min(n, std::size_t(std::llround(double(n) * train_fraction)));
    std::vector<std::size_t> train(idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
    std::vector<std::size_t> test(idx.begin() + std::ptrdiff_t(n_train), idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

// Checkpoint -------------------------------------------------------------------------

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
    ByteWriter w;
    w.bytes("WMCK", 4);
    w.le<std::uint32_t>(kCheckpointVersion);
    w.le<std::uint32_t>(std::uint32_t(tensors.size()));
    for (const auto& t : tensors) {
        w.le<std::uint32_t>(std::uint32_t(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.le<std::uint32_t>(std::uint32_t(t.value.rank()));
        for (Index d : t.value.shape()) w.le<std::uint64_t>(std::uint64_t(d));
        for (Index k = 0; k < t.value.size(); ++k) w.le<double>(t.value[k]);
    }
    return w.take();
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
    ByteReader r(bytes, "checkpoint");
    if (r.bytes(4, "magic") != "WMCK") throw FormatError("checkpoint: bad magic at offset 0");
    const auto version = r.le<std::uint32_t>("version");
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>("tensor count");
    std::vector<NamedTensor> out;
    for (std::uint32_t n = 0; n < count; ++n) {
        const auto len = r.le<std::uint32_t>("name length");
        NamedTensor t;
        t.name = r.bytes(len, "tensor name");
        const auto rank = r.le<std::uint32_t>("rank");
        if (rank == 0 || rank > 8) r.fail("invalid rank " + std::to_string(rank) + " for '" + t.name + "'");
        Shape shape;
        std::uint64_t total = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const auto d = r.le<std::uint64_t>("dimension");
            if (d == 0 || d > (1ull << 32)) r.fail("invalid dimension for '" + t.name + "'");
            total *= d;
            if (total > bytes.size()) r.fail("tensor '" + t.name + "' larger than the file");
            shape.push_back(Index(d));
        }
        t.value = Tensor(shape);
        for (Index k = 0; k < t.value.size(); ++k) t.value[k] = r.le<double>("values");
        out.push_back(std::move(t));
    }
    if (!r.at_end()) r.fail("trailing bytes after last tensor");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    write_file(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IngestError("checkpoint not found: " + path.string());
    try {
        return decode_checkpoint(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace wmc

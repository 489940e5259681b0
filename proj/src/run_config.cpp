#include "wmc/run_config.hpp"

#include <algorithm>
#include <sstream>

#include "wmc/data_io.hpp"

namespace wmc {

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k{
        "manifest",        "bodymap",           "out",
        "checkpoint",      "bodymap_raw",       "bodymap_simplified",
        "classes",         "mode",              "batch",
        "dropout",         "epochs",            "seed",
        "lr",              "optimizer",         "split",
        "augment",         "image_size",        "extractor_channels",
        "kernel_size",     "input_capsules",    "input_capsule_dim",
        "output_capsules", "output_capsule_dim", "routing_iterations",
        "image_dim",       "hidden",            "head",
        "location_encoding", "embedding_dim",   "ridge_lambda",
        "ridge_sigma2"};
    return k;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

long long parse_integer(const std::string& key, const std::string& v, long long lo) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    if (x < lo) throw ConfigError("config key '" + key + "': value " + v + " below minimum " + std::to_string(lo));
    return x;
}

unsigned long long parse_unsigned(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    unsigned long long x = 0;
    try {
        if (!v.empty() && v[0] != '-') x = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    return x;
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    return x;
}

std::vector<Index> parse_sizes(const std::string& key, const std::string& v) {
    std::vector<Index> out;
    std::stringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(Index(parse_integer(key, trim(item), 1)));
    if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one size");
    return out;
}

std::string join(const std::vector<Index>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
    return s;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + v[k];
    return s;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
    RunConfig next = *this;
    next.assign(key, trim(raw));
    *this = std::move(next);
}

void RunConfig::assign(const std::string& key, const std::string& v) {
    auto& m = model;
    if (key == "manifest") manifest = v;
    else if (key == "bodymap") bodymap = v;
    else if (key == "out") out = v;
    else if (key == "checkpoint") checkpoint = v;
    else if (key == "bodymap_raw") bodymap_raw = int(parse_integer(key, v, 1));
    else if (key == "bodymap_simplified") bodymap_simplified = int(parse_integer(key, v, 1));
    else if (key == "classes") m.classes = parse_class_set(v);
    else if (key == "mode") m.mode = parse_mode(v);
    else if (key == "batch") m.batch_size = Index(parse_integer(key, v, 1));
    else if (key == "dropout") {
        m.dropout = parse_real(key, v);
        if (!(m.dropout >= 0.0 && m.dropout < 1.0)) throw ConfigError("config key 'dropout' must be in [0, 1)");
    } else if (key == "epochs") m.epochs = int(parse_integer(key, v, 0));
    else if (key == "seed") m.seed = parse_unsigned(key, v);
    else if (key == "lr") {
        m.learning_rate = parse_real(key, v);
        if (!(m.learning_rate > 0.0)) throw ConfigError("config key 'lr' must be positive");
    } else if (key == "optimizer") m.optimizer = parse_optimizer(v);
    else if (key == "split") {
        m.train_fraction = parse_real(key, v);
        if (!(m.train_fraction > 0.0 && m.train_fraction <= 1.0))
            throw ConfigError("config key 'split' must be in (0, 1]");
    } else if (key == "augment") m.augment_copies = int(parse_integer(key, v, 0));
    else if (key == "image_size") m.extractor.image_size = Index(parse_integer(key, v, 2));
    else if (key == "extractor_channels") m.extractor.channels = parse_sizes(key, v);
    else if (key == "kernel_size") m.extractor.kernel_size = Index(parse_integer(key, v, 1));
    else if (key == "input_capsules") m.capsule.input_capsules = Index(parse_integer(key, v, 1));
    else if (key == "input_capsule_dim") m.capsule.input_dim = Index(parse_integer(key, v, 1));
    else if (key == "output_capsules") m.capsule.output_capsules = Index(parse_integer(key, v, 1));
    else if (key == "output_capsule_dim") m.capsule.output_dim = Index(parse_integer(key, v, 1));
    else if (key == "routing_iterations") m.capsule.routing_iterations = int(parse_integer(key, v, 1));
    else if (key == "image_dim") m.image_dim = Index(parse_integer(key, v, 1));
    else if (key == "hidden") m.hidden = Index(parse_integer(key, v, 1));
    else if (key == "head") m.head = parse_sizes(key, v);
    else if (key == "location_encoding") m.location_encoding = parse_location_encoding(v);
    else if (key == "embedding_dim") m.embedding_dim = Index(parse_integer(key, v, 1));
    else if (key == "ridge_lambda") {
        m.ridge_lambda = parse_real(key, v);
        if (!(m.ridge_lambda > 0.0)) throw ConfigError("config key 'ridge_lambda' must be positive");
    } else if (key == "ridge_sigma2") {
        m.ridge_sigma2 = parse_real(key, v);
        if (!(m.ridge_sigma2 > 0.0)) throw ConfigError("config key 'ridge_sigma2' must be positive");
    } else
        throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IngestError&) {
        throw ConfigError("cannot read config file " + path.string());
    }
    apply_text(text, path.string());
}

std::string RunConfig::to_text() const {
    const auto& m = model;
    std::ostringstream os;
    if (manifest) os << "manifest = " << manifest->string() << "\n";
    if (bodymap) os << "bodymap = " << bodymap->string() << "\n";
    if (out) os << "out = " << out->string() << "\n";
    if (checkpoint) os << "checkpoint = " << checkpoint->string() << "\n";
    os << "bodymap_raw = " << bodymap_raw << "\n"
       << "bodymap_simplified = " << bodymap_simplified << "\n"
       << "classes = " << join(m.classes) << "\n"
       << "mode = " << to_string(m.mode) << "\n"
       << "batch = " << m.batch_size << "\n"
       << "dropout = " << m.dropout << "\n"
       << "epochs = " << m.epochs << "\n"
       << "seed = " << m.seed << "\n"
       << "lr = " << m.learning_rate << "\n"
       << "optimizer = " << to_string(m.optimizer) << "\n"
       << "split = " << m.train_fraction << "\n"
       << "augment = " << m.augment_copies << "\n"
       << "image_size = " << m.extractor.image_size << "\n"
       << "extractor_channels = " << join(m.extractor.channels) << "\n"
       << "kernel_size = " << m.extractor.kernel_size << "\n"
       << "input_capsules = " << m.capsule.input_capsules << "\n"
       << "input_capsule_dim = " << m.capsule.input_dim << "\n"
       << "output_capsules = " << m.capsule.output_capsules << "\n"
       << "output_capsule_dim = " << m.capsule.output_dim << "\n"
       << "routing_iterations = " << m.capsule.routing_iterations << "\n"
       << "image_dim = " << m.image_dim << "\n"
       << "hidden = " << m.hidden << "\n"
       << "head = " << join(m.head) << "\n"
       << "location_encoding = " << to_string(m.location_encoding) << "\n"
       << "embedding_dim = " << m.embedding_dim << "\n"
       << "ridge_lambda = " << m.ridge_lambda << "\n"
       << "ridge_sigma2 = " << m.ridge_sigma2 << "\n";
    return os.str();
}

}  // namespace wmc

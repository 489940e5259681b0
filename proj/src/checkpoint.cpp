#include "wmc/train.hpp"

namespace wmc {

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
    return std::filesystem::path(checkpoint.string() + ".json");
}

void save_model(const std::filesystem::path& path, const FusionModel& model, std::uint64_t rng_state) {
    save_checkpoint(path, model.named_tensors());
    nlohmann::ordered_json meta;
    meta["format_version"] = kCheckpointVersion;
    meta["rng_state"] = std::to_string(rng_state);
    meta["config"] = model.config().to_json();
    write_file(sidecar_path(path), meta.dump(2) + "\n");
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
    const auto tensors = load_checkpoint(path);
    const auto meta_path = sidecar_path(path);
    if (!std::filesystem::exists(meta_path)) throw IngestError("checkpoint metadata not found: " + meta_path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
    if (meta.value("format_version", 0u) != kCheckpointVersion)
        throw FormatError(meta_path.string() + ": unsupported metadata version");
    ModelCheckpoint out;
    out.model = std::make_unique<FusionModel>(FusionModelConfig::from_json(meta.at("config")));
    out.model->load_tensors(tensors);
    try {
        out.rng_state = std::stoull(meta.at("rng_state").get<std::string>());
    } catch (const std::exception&) {
        throw FormatError(meta_path.string() + ": invalid rng_state");
    }
    return out;
}

}  // namespace wmc

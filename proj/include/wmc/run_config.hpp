#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wmc/model.hpp"

namespace wmc {

/// Settings for one CLI command: model hyper-parameters plus file paths.
///
/// Read from `key = value` lines ('#' starts a comment); every key must be
/// one of keys(). Command-line flags are applied afterwards through set().
struct RunConfig {
    std::optional<std::filesystem::path> manifest;
    std::optional<std::filesystem::path> bodymap;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> checkpoint;
    int bodymap_raw = kRawLocationCount;
    int bodymap_simplified = kSimplifiedLocationCount;
    FusionModelConfig model;

    static const std::vector<std::string>& keys();

    /// Throws ConfigError naming the key for unknown keys or bad values; a rejected value leaves the config unchanged.
    void set(const std::string& key, const std::string& value);
    void apply_text(const std::string& text, const std::string& origin = "<config>");
    void apply_file(const std::filesystem::path& path);

    /// Canonical `key = value` rendering of every key that has a value.
    std::string to_text() const;

private:
    void assign(const std::string& key, const std::string& value);
};

}  // namespace wmc

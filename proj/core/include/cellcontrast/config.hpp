#ifndef CELLCONTRAST_CONFIG_HPP
#define CELLCONTRAST_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dataio.hpp"
#include "model.hpp"
#include "nd/tensor.hpp"
#include "profiles.hpp"
#include "trainer.hpp"

namespace cellcontrast {

struct RunPaths {
    std::filesystem::path cells = "cells.bin";
    std::filesystem::path manifest = "manifest.csv";
    std::filesystem::path checkpoint = "model.ckpt";
    std::filesystem::path loss_history = "loss.csv";
    std::filesystem::path embeddings = "embeddings.embf";
    std::filesystem::path profiles = "profiles.csv";
    std::filesystem::path postprocessed = "profiles_post.csv";
    std::filesystem::path report = "report.json";
};

/**
 * Everything a run needs. Built from a JSON document layered over a named
 * preset; `default_config_json` prints the full key set with its defaults.
 */
struct RunConfig {
    std::string preset = "paper-final";
    std::uint64_t seed = 0;
    nd::Precision precision = nd::Precision::f32;
    RunPaths paths;
    dataio::SynthSpec synth;
    model::EncoderPreset encoder = model::EncoderPreset::tiny;
    model::HeadConfig head;
    contrastive::ContrastiveConfig train;
    std::size_t embed_batch_size = 64;
    profiles::Aggregation aggregation = profiles::Aggregation::mean;
    profiles::PostprocessMode postprocess = profiles::PostprocessMode::whitening;
    double eps_rel = profiles::default_eps_rel;

    model::ModelConfig model_config() const;

    void validate() const;
};

/// Names accepted by the `preset` key.
std::vector<std::string> preset_names();

/// The complete configuration document for a preset, with every key present.
std::string default_config_json(std::string_view preset = "paper-final");

/**
 * Layers `json_text` and then each `key=value` override (dotted keys, values
 * parsed as JSON or taken as a bare string) over the preset named by the
 * `preset` key. Throws `ConfigError` listing every unknown key, mistyped value
 * and invalid setting it finds.
 */
RunConfig parse_config(std::string_view json_text, std::span<const std::string> overrides = {});

/// Reads the file (when given) and calls `parse_config`; a missing file is an `IoError`.
RunConfig load_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides = {});

/// The effective configuration as a complete JSON document.
std::string to_json(const RunConfig& config);

}

#endif

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hpylori/autoencoder.hpp"
#include "hpylori/imaging.hpp"
#include "hpylori/segmentation.hpp"
#include "hpylori/synthdata.hpp"

namespace hpylori {

struct SamplingConfig {
    int n_train_windows = 50;
    int stride = 112;
    int window_size = 224;
    int resized_to = 28;
};

struct EvaluationConfig {
    int k = 10;
};

struct PathsConfig {
    std::filesystem::path workdir = "work";
    /// External dataset manifest. Empty means "use the synthetic cohort
    /// generated under <workdir>/synth".
    std::filesystem::path manifest;
};

/// Everything the pipeline reads from its INI file. Sections:
///   [red] [mask] [sampling] [autoencoder] [train] [evaluation] [synth]
///   [paths] [seeds]
/// Stage seeds, slide seeds and spot densities are derived from
/// seeds.seed and are not configurable individually.
struct PipelineConfig {
    RedFilterConfig red;
    MaskConfig mask;
    SamplingConfig sampling;
    AutoencoderConfig autoencoder;
    TrainConfig train;
    EvaluationConfig evaluation;
    CohortSpec synth;
    PathsConfig paths;
    std::uint64_t seed = 0;

    /// Throws Error(Config) on any out-of-range value.
    void validate() const;

    /// One `section.key=value` line per setting, paths excluded.
    std::string canonical() const;
    /// 16 hex digits of FNV-1a over canonical().
    std::string hash() const;
    /// Full INI text; load_config(to_ini()) reproduces this config.
    std::string to_ini() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& ini_text);

/// Applies "section.key=value". Unknown keys and unparsable values throw
/// Error(Config).
void apply_override(PipelineConfig& cfg, const std::string& assignment);

}  // namespace hpylori

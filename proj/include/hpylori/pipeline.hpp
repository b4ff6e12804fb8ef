#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hpylori/anomaly.hpp"
#include "hpylori/config.hpp"
#include "hpylori/evaluation.hpp"

namespace hpylori {

enum class Stage { Synth, Segment, Sample, Train, Score, Diagnose, Evaluate };

const char* to_string(Stage stage);
/// Throws Error(Config) for an unknown stage name.
Stage parse_stage(const std::string& name);

struct RunOptions {
    int threads = 1;
    /// Forces single-threaded execution everywhere.
    bool deterministic = false;
    std::ostream* log = nullptr;
};

/*
 * Work directory layout (all paths relative to paths.workdir):
 *
 *   synth/                     slides/*.png, truth/*.json, manifest.csv
 *   segment/<slide>.traces.csv trace,x,y   one row per border point
 *   segment/slides.csv         per-slide tissue summary
 *   windows/train_windows.csv  slide_id,patient_id,center_x,center_y,size
 *   model/autoencoder.ckpt     checkpoint, model/train_log.csv
 *   scores/window_scores.csv   one row per inference window
 *   diagnosis/slide_diagnosis.csv, diagnosis/roc_all.csv
 *   eval/eval_report.json, eval_report.txt, boxplot.csv, roc_fold<i>.csv
 *   <stage>.done.json          {"stage", "config_hash"} completion stamp
 *
 * A stage refuses to run when a prerequisite stamp is missing (MissingInput)
 * or carries a different config hash (ConfigMismatch).
 */
void run_stage(Stage stage, const PipelineConfig& cfg, const RunOptions& opts = {});

/// Chains synth (skipped when paths.manifest is set), segment, sample,
/// train, score, diagnose and evaluate. With resume, stages whose stamp
/// matches the current config are skipped.
void run_all(const PipelineConfig& cfg, const RunOptions& opts = {}, bool resume = false);

/// True when the stage's stamp exists and records cfg.hash().
bool stage_complete(Stage stage, const PipelineConfig& cfg);

/// Manifest the pipeline reads: paths.manifest, or the synthetic one.
std::filesystem::path manifest_path(const PipelineConfig& cfg);
/// File stem of a manifest slide path; the identifier used in every CSV.
std::string slide_id_of(const ManifestEntry& entry);

void write_windows_csv(std::span<const WindowSpec> windows, const std::filesystem::path& path);
std::vector<WindowSpec> read_windows_csv(const std::filesystem::path& path, int resized_to);

void write_scores_csv(std::span<const WindowScore> scores, const std::filesystem::path& path);
std::vector<WindowScore> read_scores_csv(const std::filesystem::path& path, int resized_to);

}  // namespace hpylori

#include "hpylori/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <set>

#include "hpylori/diagnosis.hpp"
#include "hpylori/error.hpp"
#include "hpylori/parallel.hpp"
#include "hpylori/segmentation.hpp"
#include "hpylori/synthdata.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace hpylori {

namespace fs = std::filesystem;

namespace {

// Streams of the root seed; one per randomized stage.
enum SeedStream : std::uint64_t { kSynthSeed = 1, kSampleSeed = 2, kInitSeed = 3, kShuffleSeed = 4, kFoldSeed = 5 };

const std::vector<std::string> kWindowHeader{"slide_id", "patient_id", "center_x", "center_y", "size"};
const std::vector<std::string> kScoreHeader{"slide_id", "patient_id", "center_x", "center_y", "size",
                                            "red_orig", "red_recon", "f_red", "positive"};
const std::vector<std::string> kTraceHeader{"trace", "x", "y"};

fs::path workdir(const PipelineConfig& cfg) { return cfg.paths.workdir; }
fs::path stamp_path(const PipelineConfig& cfg, Stage s) {
    return workdir(cfg) / (std::string(to_string(s)) + ".done.json");
}
fs::path traces_path(const PipelineConfig& cfg, const std::string& slide_id) {
    return workdir(cfg) / "segment" / (slide_id + ".traces.csv");
}
fs::path train_windows_path(const PipelineConfig& cfg) { return workdir(cfg) / "windows" / "train_windows.csv"; }
fs::path model_path(const PipelineConfig& cfg) { return workdir(cfg) / "model" / "autoencoder.ckpt"; }
fs::path scores_path(const PipelineConfig& cfg) { return workdir(cfg) / "scores" / "window_scores.csv"; }
fs::path diagnosis_path(const PipelineConfig& cfg) { return workdir(cfg) / "diagnosis" / "slide_diagnosis.csv"; }

int worker_count(const RunOptions& opts) { return opts.deterministic ? 1 : std::max(1, opts.threads); }

void log(const RunOptions& opts, const std::string& msg) {
    if (opts.log) *opts.log << msg << std::endl;
}

void write_stamp(const PipelineConfig& cfg, Stage s) {
    nlohmann::ordered_json j;
    j["stage"] = to_string(s);
    j["config_hash"] = cfg.hash();
    auto out = detail::open_output(stamp_path(cfg, s));
    out << j.dump() << '\n';
}

void require_stage(const PipelineConfig& cfg, Stage s) {
    const fs::path p = stamp_path(cfg, s);
    std::ifstream in(p);
    if (!in) fail(ErrorKind::MissingInput, std::string("stage '") + to_string(s) + "' has not been run in " +
                                               workdir(cfg).string());
    std::string recorded;
    try {
        recorded = nlohmann::json::parse(in).at("config_hash").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::MalformedFile, "unreadable stage stamp " + p.string());
    }
    if (recorded != cfg.hash()) {
        fail(ErrorKind::ConfigMismatch, std::string("stage '") + to_string(s) + "' was produced by config " +
                                            recorded + ", current config is " + cfg.hash());
    }
}

struct Dataset {
    fs::path root;
    std::vector<ManifestEntry> rows;

    fs::path slide_file(const ManifestEntry& e) const {
        const fs::path p = e.slide_path;
        return p.is_absolute() ? p : root / p;
    }
};

Dataset load_dataset(const PipelineConfig& cfg) {
    Dataset d;
    const fs::path m = manifest_path(cfg);
    d.root = m.parent_path();
    d.rows = read_manifest(m);
    if (d.rows.empty()) fail(ErrorKind::EmptyInput, "manifest " + m.string() + " lists no slides");
    std::set<std::string> ids;
    for (const auto& e : d.rows) {
        if (!ids.insert(slide_id_of(e)).second) {
            fail(ErrorKind::MalformedFile, "manifest has two slides named " + slide_id_of(e));
        }
    }
    return d;
}

void write_traces(const std::vector<BorderTrace>& traces, const fs::path& path) {
    auto out = detail::open_output(path);
    out << "trace,x,y\n";
    for (std::size_t t = 0; t < traces.size(); ++t) {
        for (const auto& p : traces[t].points) out << t << ',' << p.x << ',' << p.y << '\n';
    }
}

std::vector<BorderTrace> read_traces(const fs::path& path) {
    std::vector<BorderTrace> traces;
    for (const auto& row : detail::read_csv(path, kTraceHeader)) {
        const auto t = detail::parse<std::size_t>(row[0], "trace");
        if (t > traces.size()) fail(ErrorKind::MalformedFile, path.string() + ": trace ids must be consecutive");
        if (t == traces.size()) traces.emplace_back();
        traces[t].points.push_back({detail::parse<int>(row[1], "x"), detail::parse<int>(row[2], "y")});
    }
    for (auto& t : traces) t.closed = true;
    return traces;
}

void stage_synth(const PipelineConfig& cfg, const RunOptions& opts) {
    CohortSpec spec = cfg.synth;
    spec.seed = mix_seed(cfg.seed, kSynthSeed);
    const auto rows = generate_cohort(spec, workdir(cfg) / "synth", worker_count(opts));
    log(opts, "synth: wrote " + std::to_string(rows.size()) + " slides");
}

void stage_segment(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    struct Summary {
        int width = 0, height = 0;
        std::size_t tissue = 0, traces = 0, points = 0;
    };
    std::vector<Summary> summary(data.rows.size());
    parallel_for(data.rows.size(), worker_count(opts), [&](std::size_t i) {
        const auto& e = data.rows[i];
        const RasterImage slide = load_image(data.slide_file(e));
        const TissueMask mask = detect_mask(slide, cfg.mask);
        const auto traces = trace_borders(mask);
        write_traces(traces, traces_path(cfg, slide_id_of(e)));
        Summary& s = summary[i];
        s.width = slide.width();
        s.height = slide.height();
        s.tissue = mask.count();
        s.traces = traces.size();
        for (const auto& t : traces) s.points += t.points.size();
    });
    auto out = detail::open_output(workdir(cfg) / "segment" / "slides.csv");
    out << "slide_id,patient_id,width,height,tissue_px,n_traces,border_points\n";
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& s = summary[i];
        out << slide_id_of(data.rows[i]) << ',' << data.rows[i].patient_id << ',' << s.width << ',' << s.height
            << ',' << s.tissue << ',' << s.traces << ',' << s.points << '\n';
    }
    log(opts, "segment: traced " + std::to_string(data.rows.size()) + " slides");
}

// Training slides: role "train" of negative patients only.
std::vector<std::size_t> training_slides(const Dataset& data) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        if (data.rows[i].slide_role == "train" && data.rows[i].label == Label::Negative) out.push_back(i);
    }
    if (out.empty()) fail(ErrorKind::EmptyInput, "manifest has no negative training slides");
    return out;
}

void stage_sample(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    const auto slides = training_slides(data);
    std::vector<std::vector<WindowSpec>> per_slide(slides.size());
    const std::uint64_t root = mix_seed(cfg.seed, kSampleSeed);
    parallel_for(slides.size(), worker_count(opts), [&](std::size_t k) {
        const auto& e = data.rows[slides[k]];
        const RasterImage slide = load_image(data.slide_file(e));
        const auto traces = read_traces(traces_path(cfg, slide_id_of(e)));
        per_slide[k] = sample_training_windows(slide, traces, cfg.sampling.n_train_windows,
                                               mix_seed(root, slides[k]), slide_id_of(e), e.patient_id,
                                               cfg.sampling.window_size, cfg.sampling.resized_to);
    });
    std::vector<WindowSpec> all;
    for (auto& w : per_slide) all.insert(all.end(), w.begin(), w.end());
    write_windows_csv(all, train_windows_path(cfg));
    log(opts, "sample: " + std::to_string(all.size()) + " training windows from " +
                  std::to_string(slides.size()) + " slides");
}

// Crops the given windows, loading every referenced slide once.
std::vector<RasterImage> crop_all(const Dataset& data, std::span<const WindowSpec> windows, int threads) {
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < data.rows.size(); ++i) by_id[slide_id_of(data.rows[i])] = i;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!by_id.count(windows[i].slide_id)) {
            fail(ErrorKind::MalformedFile, "window refers to unknown slide " + windows[i].slide_id);
        }
        groups[windows[i].slide_id].push_back(i);
    }
    std::vector<std::pair<std::string, std::vector<std::size_t>>> jobs(groups.begin(), groups.end());
    std::vector<RasterImage> crops(windows.size());
    parallel_for(jobs.size(), threads, [&](std::size_t j) {
        const RasterImage slide = load_image(data.slide_file(data.rows[by_id.at(jobs[j].first)]));
        for (std::size_t i : jobs[j].second) crops[i] = crop_window(slide, windows[i]);
    });
    return crops;
}

void stage_train(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    const auto windows = read_windows_csv(train_windows_path(cfg), cfg.sampling.resized_to);
    if (windows.empty()) fail(ErrorKind::EmptyInput, "no training windows");
    const auto crops = crop_all(data, windows, worker_count(opts));

    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.seed, kShuffleSeed);
    auto model = AutoencoderModel::init(cfg.autoencoder, mix_seed(cfg.seed, kInitSeed));
    const auto start = std::chrono::steady_clock::now();
    model = train(std::move(model), crops, tc, [&](int epoch, double loss) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char line[128];
        std::snprintf(line, sizeof(line), "train: epoch %d/%d loss %.6g (%.1fs)", epoch + 1, tc.epochs, loss, secs);
        log(opts, line);
    });
    model.meta.config_hash = cfg.hash();
    save_model(model, model_path(cfg));

    auto out = detail::open_output(workdir(cfg) / "model" / "train_log.csv");
    out << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < model.meta.epoch_losses.size(); ++e) {
        out << e + 1 << ',' << detail::fmt(model.meta.epoch_losses[e]) << '\n';
    }
}

void stage_score(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    const AutoencoderModel model = load_model(model_path(cfg));
    if (model.meta.config_hash != cfg.hash()) {
        fail(ErrorKind::ConfigMismatch, "checkpoint was trained under config " + model.meta.config_hash +
                                            ", current config is " + cfg.hash());
    }
    std::vector<std::size_t> eval;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        if (data.rows[i].slide_role == "eval") eval.push_back(i);
    }
    if (eval.empty()) fail(ErrorKind::EmptyInput, "manifest has no evaluation slides");

    std::vector<std::vector<WindowScore>> per_slide(eval.size());
    parallel_for(eval.size(), worker_count(opts), [&](std::size_t k) {
        const auto& e = data.rows[eval[k]];
        const RasterImage slide = load_image(data.slide_file(e));
        const auto traces = read_traces(traces_path(cfg, slide_id_of(e)));
        const auto windows = enumerate_inference_windows(slide, traces, cfg.sampling.stride, slide_id_of(e),
                                                         e.patient_id, cfg.sampling.window_size,
                                                         cfg.sampling.resized_to);
        std::vector<RasterImage> crops;
        crops.reserve(windows.size());
        for (const auto& w : windows) crops.push_back(crop_window(slide, w));
        per_slide[k] = score_windows(model, crops, windows, cfg.red);
    });
    std::vector<WindowScore> all;
    for (auto& s : per_slide) all.insert(all.end(), s.begin(), s.end());
    write_scores_csv(all, scores_path(cfg));
    log(opts, "score: " + std::to_string(all.size()) + " windows on " + std::to_string(eval.size()) + " slides");
}

void stage_diagnose(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    const auto scores = read_scores_csv(scores_path(cfg), cfg.sampling.resized_to);
    std::map<std::string, Label> label_of;
    for (const auto& e : data.rows) label_of[slide_id_of(e)] = e.label;

    // Group in file order so the output is stable.
    std::vector<std::string> order;
    std::map<std::string, std::vector<WindowScore>> groups;
    for (const auto& s : scores) {
        auto [it, inserted] = groups.try_emplace(s.window.slide_id);
        if (inserted) order.push_back(s.window.slide_id);
        it->second.push_back(s);
    }
    std::vector<SlideDiagnosis> rows;
    std::vector<LabeledFraction> labeled;
    for (const auto& id : order) {
        rows.push_back(diagnose_slide(groups[id], 0.0));
        if (!label_of.count(id)) fail(ErrorKind::MalformedFile, "scores refer to unknown slide " + id);
        labeled.push_back({rows.back().positive_fraction, label_of[id] == Label::Positive});
    }
    // Cohort-wide operating point for this descriptive file; evaluation
    // selects its thresholds per fold from training patients only.
    double threshold = 0.0;
    try {
        const RocCurve roc = roc_curve(labeled);
        threshold = optimal_threshold(roc);
        write_roc_csv(roc, workdir(cfg) / "diagnosis" / "roc_all.csv");
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRoc) throw;
        log(opts, "diagnose: single-class cohort, using threshold 0");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = diagnose_slide(groups[order[i]], threshold);
    }
    write_diagnosis_csv(rows, diagnosis_path(cfg));
    log(opts, "diagnose: " + std::to_string(rows.size()) + " slides, cohort threshold " + detail::fmt(threshold));
}

void stage_evaluate(const PipelineConfig& cfg, const RunOptions& opts) {
    const Dataset data = load_dataset(cfg);
    const auto diagnoses = read_diagnosis_csv(diagnosis_path(cfg));
    const auto patients = patients_from_manifest(data.rows);

    std::map<std::string, PatientFraction> by_patient;
    for (const auto& p : patients) by_patient[p.patient_id] = {p.patient_id, p.label, 0.0, 0, 0};
    for (const auto& d : diagnoses) {
        auto it = by_patient.find(d.patient_id);
        if (it == by_patient.end()) fail(ErrorKind::MalformedFile, "diagnosis for unknown patient " + d.patient_id);
        it->second.n_windows += d.n_windows;
        it->second.n_positive += d.n_positive;
    }
    std::vector<PatientFraction> fractions;
    for (const auto& p : patients) {
        PatientFraction f = by_patient[p.patient_id];
        if (f.n_windows == 0) fail(ErrorKind::EmptyInput, "patient " + p.patient_id + " has no scored windows");
        f.fraction = static_cast<double>(f.n_positive) / static_cast<double>(f.n_windows);
        fractions.push_back(f);
    }

    const FoldPlan plan = make_folds(patients, cfg.evaluation.k, mix_seed(cfg.seed, kFoldSeed));
    const EvalReport report = evaluate(plan, fractions);
    const fs::path dir = workdir(cfg) / "eval";
    detail::open_output(dir / "eval_report.json") << report_json(report, cfg.hash());
    detail::open_output(dir / "eval_report.txt") << report_text(report);
    write_boxplot_csv(fractions, dir / "boxplot.csv");
    for (const auto& f : report.folds) {
        write_roc_csv(f.train_roc, dir / ("roc_fold" + std::to_string(f.fold) + ".csv"));
    }
    log(opts, "evaluate: pooled AUC " + detail::fmt(report.pooled_auc));
}

Stage prerequisite(Stage s) {
    switch (s) {
        case Stage::Segment: return Stage::Synth;
        case Stage::Sample: return Stage::Segment;
        case Stage::Train: return Stage::Sample;
        case Stage::Score: return Stage::Train;
        case Stage::Diagnose: return Stage::Score;
        case Stage::Evaluate: return Stage::Diagnose;
        case Stage::Synth: break;
    }
    return Stage::Synth;
}

}  // namespace

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Synth: return "synth";
        case Stage::Segment: return "segment";
        case Stage::Sample: return "sample";
        case Stage::Train: return "train";
        case Stage::Score: return "score";
        case Stage::Diagnose: return "diagnose";
        case Stage::Evaluate: return "evaluate";
    }
    return "unknown";
}

Stage parse_stage(const std::string& name) {
    for (Stage s : {Stage::Synth, Stage::Segment, Stage::Sample, Stage::Train, Stage::Score, Stage::Diagnose,
                    Stage::Evaluate}) {
        if (name == to_string(s)) return s;
    }
    fail(ErrorKind::Config, "unknown stage '" + name + "'");
}

fs::path manifest_path(const PipelineConfig& cfg) {
    return cfg.paths.manifest.empty() ? workdir(cfg) / "synth" / "manifest.csv" : cfg.paths.manifest;
}

std::string slide_id_of(const ManifestEntry& entry) { return fs::path(entry.slide_path).stem().string(); }

bool stage_complete(Stage stage, const PipelineConfig& cfg) {
    try {
        require_stage(cfg, stage);
        return true;
    } catch (const Error&) {
        return false;
    }
}

void run_stage(Stage stage, const PipelineConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    // An external manifest replaces the synth stage, so segmenting has no
    // stamp to check; every later stage does.
    if (stage != Stage::Synth && !(stage == Stage::Segment && !cfg.paths.manifest.empty())) {
        require_stage(cfg, prerequisite(stage));
    }
    fs::remove(stamp_path(cfg, stage));
    switch (stage) {
        case Stage::Synth: stage_synth(cfg, opts); break;
        case Stage::Segment: stage_segment(cfg, opts); break;
        case Stage::Sample: stage_sample(cfg, opts); break;
        case Stage::Train: stage_train(cfg, opts); break;
        case Stage::Score: stage_score(cfg, opts); break;
        case Stage::Diagnose: stage_diagnose(cfg, opts); break;
        case Stage::Evaluate: stage_evaluate(cfg, opts); break;
    }
    write_stamp(cfg, stage);
}

void run_all(const PipelineConfig& cfg, const RunOptions& opts, bool resume) {
    cfg.validate();
    bool upstream_rerun = false;
    for (Stage s : {Stage::Synth, Stage::Segment, Stage::Sample, Stage::Train, Stage::Score, Stage::Diagnose,
                    Stage::Evaluate}) {
        if (s == Stage::Synth && !cfg.paths.manifest.empty()) continue;
        if (resume && !upstream_rerun && stage_complete(s, cfg)) {
            log(opts, std::string(to_string(s)) + ": up to date, skipped");
            continue;
        }
        run_stage(s, cfg, opts);
        upstream_rerun = true;
    }
}

void write_windows_csv(std::span<const WindowSpec> windows, const fs::path& path) {
    auto out = detail::open_output(path);
    out << "slide_id,patient_id,center_x,center_y,size\n";
    for (const auto& w : windows) {
        out << w.slide_id << ',' << w.patient_id << ',' << w.center.x << ',' << w.center.y << ',' << w.size << '\n';
    }
}

std::vector<WindowSpec> read_windows_csv(const fs::path& path, int resized_to) {
    std::vector<WindowSpec> out;
    for (const auto& row : detail::read_csv(path, kWindowHeader)) {
        WindowSpec w;
        w.slide_id = row[0];
        w.patient_id = row[1];
        w.center = {detail::parse<int>(row[2], "center_x"), detail::parse<int>(row[3], "center_y")};
        w.size = detail::parse<int>(row[4], "size");
        w.resized_to = resized_to;
        out.push_back(std::move(w));
    }
    return out;
}

void write_scores_csv(std::span<const WindowScore> scores, const fs::path& path) {
    auto out = detail::open_output(path);
    out << "slide_id,patient_id,center_x,center_y,size,red_orig,red_recon,f_red,positive\n";
    for (const auto& s : scores) {
        const auto& w = s.window;
        out << w.slide_id << ',' << w.patient_id << ',' << w.center.x << ',' << w.center.y << ',' << w.size << ','
            << s.red_orig << ',' << s.red_recon << ',' << detail::fmt(s.f_red) << ',' << (s.positive ? 1 : 0)
            << '\n';
    }
}

std::vector<WindowScore> read_scores_csv(const fs::path& path, int resized_to) {
    std::vector<WindowScore> out;
    for (const auto& row : detail::read_csv(path, kScoreHeader)) {
        WindowScore s;
        s.window.slide_id = row[0];
        s.window.patient_id = row[1];
        s.window.center = {detail::parse<int>(row[2], "center_x"), detail::parse<int>(row[3], "center_y")};
        s.window.size = detail::parse<int>(row[4], "size");
        s.window.resized_to = resized_to;
        s.red_orig = detail::parse<std::size_t>(row[5], "red_orig");
        s.red_recon = detail::parse<std::size_t>(row[6], "red_recon");
        s.f_red = detail::parse<double>(row[7], "f_red");
        s.positive = detail::parse<int>(row[8], "positive") != 0;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hpylori

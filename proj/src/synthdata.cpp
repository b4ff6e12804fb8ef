#include "hpylori/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "hpylori/error.hpp"
#include "hpylori/parallel.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace hpylori {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Blob {
    double cx, cy;
    double rx, ry;
    double rotation;
    std::array<double, 4> harmonic_amp;
    std::array<double, 4> harmonic_phase;

    // Inside test on the noise-deformed ellipse.
    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double c = std::cos(rotation);
        const double s = std::sin(rotation);
        const double u = (dx * c + dy * s) / rx;
        const double v = (-dx * s + dy * c) / ry;
        const double r = std::sqrt(u * u + v * v);
        const double phi = std::atan2(v, u);
        double edge = 1.0;
        for (int k = 0; k < 4; ++k) edge += harmonic_amp[k] * std::cos((k + 2) * phi + harmonic_phase[k]);
        return r <= edge;
    }
};

// Smooth random field in roughly [-1, 1] built from a few plane waves.
struct Field {
    std::array<double, 4> kx, ky, phase;

    explicit Field(std::mt19937_64& rng) {
        std::uniform_real_distribution<double> freq(0.004, 0.03);
        std::uniform_real_distribution<double> angle(0.0, kTwoPi);
        for (int i = 0; i < 4; ++i) {
            const double f = freq(rng);
            const double a = angle(rng);
            kx[i] = f * std::cos(a);
            ky[i] = f * std::sin(a);
            phase[i] = angle(rng);
        }
    }
    double operator()(double x, double y) const {
        double v = 0.0;
        for (int i = 0; i < 4; ++i) v += std::sin(kx[i] * x + ky[i] * y + phase[i]);
        return v / 4.0;
    }
};

double wrap_hue(double h) {
    h = std::fmod(h, 360.0);
    return h < 0.0 ? h + 360.0 : h;
}

std::vector<Blob> place_blobs(const SynthSpec& spec, std::mt19937_64& rng) {
    const double aspect = static_cast<double>(spec.width) / spec.height;
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(spec.n_blobs * aspect))));
    const int rows = (spec.n_blobs + cols - 1) / cols;
    const double cell_w = static_cast<double>(spec.width) / cols;
    const double cell_h = static_cast<double>(spec.height) / rows;
    const double margin = 8.0;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Blob> blobs;
    for (int i = 0; i < spec.n_blobs; ++i) {
        const int col = i % cols;
        const int row = i / cols;
        Blob b{};
        const double half = std::min(cell_w, cell_h) / 2.0 - margin;
        const double r0 = half * (0.55 + 0.2 * unit(rng));
        const double stretch = 0.85 + 0.3 * unit(rng);
        b.rx = r0 * stretch;
        b.ry = r0 / stretch;
        b.rotation = unit(rng) * std::numbers::pi;
        double amp_total = 0.0;
        for (int k = 0; k < 4; ++k) {
            b.harmonic_amp[k] = 0.08 * unit(rng) / (k + 1);
            b.harmonic_phase[k] = unit(rng) * kTwoPi;
            amp_total += b.harmonic_amp[k];
        }
        // Keep the deformed outline inside its cell.
        const double reach = std::max(b.rx, b.ry) * (1.0 + amp_total);
        const double slack_x = std::max(0.0, cell_w / 2.0 - margin - reach);
        const double slack_y = std::max(0.0, cell_h / 2.0 - margin - reach);
        b.cx = (col + 0.5) * cell_w + (2.0 * unit(rng) - 1.0) * slack_x;
        b.cy = (row + 0.5) * cell_h + (2.0 * unit(rng) - 1.0) * slack_y;
        blobs.push_back(b);
    }
    return blobs;
}

}  // namespace

void SynthSpec::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::Config, "synth spec: " + m); };
    if (width < 16 || height < 16) bad("slide must be at least 16x16");
    if (n_blobs < 1) bad("n_blobs must be >= 1");
    if (!(tissue_hue_min <= tissue_hue_max)) bad("tissue hue band is empty");
    if (!(spot_density >= 0.0)) bad("spot_density must be >= 0");
    if (!(spot_radius_min > 0.0 && spot_radius_min <= spot_radius_max)) bad("invalid spot radius range");
    if (!(spot_hue_min <= spot_hue_max)) bad("spot hue band is empty");
    if (!(texture_noise >= 0.0 && texture_noise <= 0.1)) bad("texture_noise must lie in [0, 0.1]");
}

void CohortSpec::validate() const {
    if (n_negative < 1 || n_positive < 1) fail(ErrorKind::Config, "cohort needs >= 1 patient per class");
    if (slides_per_patient < 2) fail(ErrorKind::Config, "cohort needs >= 2 slides per patient");
    if (!(density_min > 0.0 && density_min <= density_max)) {
        fail(ErrorKind::Config, "cohort density range must be positive and ordered");
    }
    slide.validate();
}

std::vector<Spot> SynthGroundTruth::spots_in(const Rect& r) const {
    std::vector<Spot> out;
    for (const auto& s : spots) {
        if (r.contains(static_cast<int>(std::lround(s.x)), static_cast<int>(std::lround(s.y)))) {
            out.push_back(s);
        }
    }
    return out;
}

SynthSlide generate_slide(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto blobs = place_blobs(spec, rng);
    const Field hue_field(rng);
    const Field sat_field(rng);
    const Field val_field(rng);
    const double base_hue = spec.tissue_hue_min + unit(rng) * (spec.tissue_hue_max - spec.tissue_hue_min);
    const double hue_span = (spec.tissue_hue_max - spec.tissue_hue_min) / 2.0;

    SynthSlide out;
    out.image = RasterImage(spec.width, spec.height);
    out.truth.mask = TissueMask(spec.width, spec.height);
    out.truth.spot_density = spec.spot_density;
    out.truth.label = spec.spot_density > 0.0 ? Label::Positive : Label::Negative;

    const double noise = spec.texture_noise;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            bool tissue = false;
            for (const auto& b : blobs) {
                if (b.contains(x + 0.5, y + 0.5)) {
                    tissue = true;
                    break;
                }
            }
            HsvPixel p;
            if (tissue) {
                out.truth.mask.set(x, y, true);
                p.hue = std::clamp(base_hue + hue_span * hue_field(x, y), spec.tissue_hue_min,
                                   spec.tissue_hue_max);
                p.saturation = std::clamp(0.45 + 0.12 * sat_field(x, y) + noise * gauss(rng), 0.25, 0.8);
                p.value = std::clamp(0.72 + 0.1 * val_field(x, y) + noise * gauss(rng), 0.4, 0.95);
            } else {
                p.hue = 210.0;
                p.saturation = std::clamp(0.02 + 0.25 * noise * std::fabs(gauss(rng)), 0.0, 0.05);
                p.value = std::clamp(0.95 + 0.25 * noise * gauss(rng), 0.88, 1.0);
            }
            out.image.set(x, y, hsv_to_rgb(p));
        }
    }

    // Dark nuclei inside tissue, same hue family as the tissue.
    std::size_t area = out.truth.mask.count();
    const int n_nuclei = static_cast<int>(area / 600);
    for (int i = 0; i < n_nuclei; ++i) {
        const int cx = static_cast<int>(unit(rng) * spec.width);
        const int cy = static_cast<int>(unit(rng) * spec.height);
        const double r = 1.5 + 2.0 * unit(rng);
        if (!out.truth.mask.at(cx, cy)) continue;
        const int ir = static_cast<int>(std::ceil(r));
        for (int dy = -ir; dy <= ir; ++dy) {
            for (int dx = -ir; dx <= ir; ++dx) {
                const int xx = cx + dx;
                const int yy = cy + dy;
                if (dx * dx + dy * dy > r * r || !out.truth.mask.at(xx, yy)) continue;
                HsvPixel p{std::clamp(base_hue + 10.0, spec.tissue_hue_min, spec.tissue_hue_max),
                           0.6, 0.45};
                out.image.set(xx, yy, hsv_to_rgb(p));
            }
        }
    }

    out.truth.borders = trace_borders(out.truth.mask);
    std::vector<Point> border;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (out.truth.mask.is_boundary(x, y)) border.push_back({x, y});
        }
    }
    out.truth.border_pixels = border.size();

    if (spec.spot_density > 0.0 && !border.empty()) {
        std::poisson_distribution<int> poisson(spec.spot_density * static_cast<double>(border.size()) / 1000.0);
        const int n_spots = std::max(1, poisson(rng));
        std::uniform_int_distribution<std::size_t> pick(0, border.size() - 1);
        for (int i = 0; i < n_spots; ++i) {
            const Point anchor = border[pick(rng)];
            Spot s;
            s.radius = spec.spot_radius_min + unit(rng) * (spec.spot_radius_max - spec.spot_radius_min);
            s.x = anchor.x + (unit(rng) - 0.5) * s.radius;
            s.y = anchor.y + (unit(rng) - 0.5) * s.radius;
            const double hue = wrap_hue(spec.spot_hue_min + unit(rng) * (spec.spot_hue_max - spec.spot_hue_min));
            const double sat = 0.75 + 0.2 * unit(rng);
            const double val = 0.65 + 0.25 * unit(rng);
            const int ir = static_cast<int>(std::ceil(s.radius));
            const int cx = static_cast<int>(std::lround(s.x));
            const int cy = static_cast<int>(std::lround(s.y));
            for (int dy = -ir; dy <= ir; ++dy) {
                for (int dx = -ir; dx <= ir; ++dx) {
                    const int xx = cx + dx;
                    const int yy = cy + dy;
                    if (xx < 0 || yy < 0 || xx >= spec.width || yy >= spec.height) continue;
                    if (dx * dx + dy * dy > s.radius * s.radius) continue;
                    HsvPixel p{hue, std::clamp(sat + 0.5 * noise * gauss(rng), 0.6, 1.0),
                               std::clamp(val + 0.5 * noise * gauss(rng), 0.5, 1.0)};
                    out.image.set(xx, yy, hsv_to_rgb(p));
                }
            }
            out.truth.spots.push_back(s);
        }
    }
    return out;
}

std::string ground_truth_json(const SynthGroundTruth& truth) {
    nlohmann::ordered_json j;
    j["label"] = to_string(truth.label);
    j["spot_density"] = truth.spot_density;
    j["width"] = truth.mask.width();
    j["height"] = truth.mask.height();
    j["border_pixels"] = truth.border_pixels;
    auto spots = nlohmann::ordered_json::array();
    for (const auto& s : truth.spots) spots.push_back({{"x", s.x}, {"y", s.y}, {"radius", s.radius}});
    j["spots"] = std::move(spots);

    auto runs = nlohmann::ordered_json::array();
    const std::size_t w = static_cast<std::size_t>(truth.mask.width());
    const std::size_t n = w * static_cast<std::size_t>(truth.mask.height());
    std::size_t i = 0;
    while (i < n) {
        if (!truth.mask.at(static_cast<int>(i % w), static_cast<int>(i / w))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < n && truth.mask.at(static_cast<int>(i % w), static_cast<int>(i / w))) ++i;
        runs.push_back({start, i - start});
    }
    j["mask_rle"] = std::move(runs);
    return j.dump();
}

SynthGroundTruth read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::MissingFile, "ground truth not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        SynthGroundTruth t;
        t.label = parse_label(j.at("label").get<std::string>());
        t.spot_density = j.at("spot_density").get<double>();
        t.border_pixels = j.at("border_pixels").get<std::size_t>();
        const int w = j.at("width").get<int>();
        const int h = j.at("height").get<int>();
        t.mask = TissueMask(w, h);
        for (const auto& s : j.at("spots")) {
            t.spots.push_back({s.at("x").get<double>(), s.at("y").get<double>(), s.at("radius").get<double>()});
        }
        for (const auto& run : j.at("mask_rle")) {
            const std::size_t start = run.at(0).get<std::size_t>();
            const std::size_t len = run.at(1).get<std::size_t>();
            for (std::size_t i = start; i < start + len; ++i) {
                t.mask.set(static_cast<int>(i % w), static_cast<int>(i / w), true);
            }
        }
        t.borders = trace_borders(t.mask);
        return t;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedFile, "bad ground truth " + path.string() + ": " + e.what());
    }
}

std::vector<ManifestEntry> generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir,
                                           int threads) {
    spec.validate();
    struct Job {
        ManifestEntry entry;
        std::string slide_id;
        SynthSpec slide;
    };

    std::vector<Job> jobs;
    const int n_patients = spec.n_negative + spec.n_positive;
    const double mid = (spec.density_min + spec.density_max) / 2.0;
    for (int p = 0; p < n_patients; ++p) {
        char id[16];
        std::snprintf(id, sizeof(id), "P%03d", p);
        const bool positive = p >= spec.n_negative;
        std::mt19937_64 prng(mix_seed(spec.seed, static_cast<std::uint64_t>(p)));
        double density = 0.0;
        std::string band;
        if (positive) {
            const bool high = (p - spec.n_negative) % 2 == 1;
            band = high ? "high" : "low";
            std::uniform_real_distribution<double> d(high ? mid : spec.density_min, high ? spec.density_max : mid);
            density = d(prng);
        }
        for (int s = 1; s <= spec.slides_per_patient; ++s) {
            Job job;
            job.slide_id = std::string(id) + "_s" + std::to_string(s);
            job.entry.patient_id = id;
            job.entry.label = positive ? Label::Positive : Label::Negative;
            job.entry.density = band;
            job.entry.slide_path = "slides/" + job.slide_id + ".png";
            job.entry.slide_role = s == 1 ? "train" : "eval";
            job.slide = spec.slide;
            job.slide.spot_density = density;
            job.slide.seed = mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(p)),
                                      static_cast<std::uint64_t>(s));
            jobs.push_back(std::move(job));
        }
    }

    std::filesystem::create_directories(out_dir / "slides");
    std::filesystem::create_directories(out_dir / "truth");
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const auto& job = jobs[i];
        const SynthSlide slide = generate_slide(job.slide);
        save_image(slide.image, out_dir / job.entry.slide_path);
        auto out = detail::open_output(out_dir / "truth" / (job.slide_id + ".json"));
        out << ground_truth_json(slide.truth) << '\n';
    });

    std::vector<ManifestEntry> manifest;
    for (const auto& job : jobs) manifest.push_back(job.entry);
    write_manifest(manifest, out_dir / "manifest.csv");
    return manifest;
}

}  // namespace hpylori

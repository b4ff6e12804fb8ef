#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hpylori/diagnosis.hpp"
#include "hpylori/evaluation.hpp"
#include "hpylori/imaging.hpp"
#include "hpylori/segmentation.hpp"

namespace hpylori {

/// Parameters of one synthetic stained slide. Tissue is blue-hued, spots
/// are red-hued and sit on tissue borders only. Hue bands are in degrees;
/// the spot band may straddle 0 (e.g. [-15, 15]).
struct SynthSpec {
    std::uint64_t seed = 0;
    int width = 1024;
    int height = 768;
    int n_blobs = 2;
    double tissue_hue_min = 200.0;
    double tissue_hue_max = 250.0;
    /// Expected spots per 1000 border pixels; 0 renders a negative slide.
    double spot_density = 0.0;
    double spot_radius_min = 2.0;
    double spot_radius_max = 6.0;
    double spot_hue_min = -15.0;
    double spot_hue_max = 15.0;
    /// Amplitude of per-pixel value/saturation jitter on tissue and background.
    double texture_noise = 0.04;

    void validate() const;
};

struct Spot {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.0;
};

struct SynthGroundTruth {
    TissueMask mask;  // tissue blobs before spots are drawn
    std::vector<BorderTrace> borders;
    std::vector<Spot> spots;
    Label label = Label::Negative;
    double spot_density = 0.0;
    std::size_t border_pixels = 0;

    /// Spots whose center lies inside the rectangle.
    std::vector<Spot> spots_in(const Rect& r) const;
};

struct SynthSlide {
    RasterImage image;
    SynthGroundTruth truth;
};

SynthSlide generate_slide(const SynthSpec& spec);

/// Ground truth as JSON: label, density, spot list and a run-length
/// encoded mask ([start, length] runs over the row-major pixel index).
std::string ground_truth_json(const SynthGroundTruth& truth);
SynthGroundTruth read_ground_truth(const std::filesystem::path& path);

struct CohortSpec {
    int n_negative = 20;
    int n_positive = 20;
    /// Positive patients alternate between the lower and upper half of
    /// this range (low / high density).
    double density_min = 3.0;
    double density_max = 12.0;
    int slides_per_patient = 2;
    std::uint64_t seed = 0;
    SynthSpec slide;  // seed and spot_density are overridden per slide

    void validate() const;
};

/// Writes slides/<patient>_s<i>.png, truth/<patient>_s<i>.json and
/// manifest.csv under out_dir. Slide 1 has role "train", the rest "eval".
std::vector<ManifestEntry> generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir,
                                           int threads = 1);

}  // namespace hpylori

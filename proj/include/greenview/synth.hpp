#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "greenview/imagery.hpp"
#include "greenview/raster.hpp"
#include "greenview/util.hpp"

namespace greenview {

// Seeded synthetic street-scene generator: green rectangles/ellipses over
// textured non-green backgrounds, with the exact vegetation mask (and hence
// an exact GVI label) as ground truth. Optional "gray-green" distractor
// shapes are green-dominant enough to fool a fixed color threshold but are
// not vegetation and stay out of the mask.
struct SynthOptions {
    int width = 128;
    int height = 128;
    int min_shapes = 1;
    int max_shapes = 3;
    bool distractors = false;
};

struct SynthSample {
    RgbImage image;
    BinaryMask mask;
    double gvi = 0.0;  // exact mask fraction
};

SynthSample generate_synth_image(Rng& rng, const SynthOptions& opt);

// Writes n images + masks + a labelled manifest (fields gvi and mask_path)
// into dir; returns the manifest records sorted by image_id.
std::vector<ImageRecord> generate_synth_dataset(const std::string& dir, int n,
                                                uint64_t seed, const SynthOptions& opt);

}  // namespace greenview

#pragma once

#include <vector>

#include "symlabel/ipdf.hpp"
#include "symlabel/labeler.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/symmetry.hpp"

namespace symlabel {

/// Training targets per frame: pseudo = the rotations of its accepted labels,
/// single = the render pose, analytic = render pose composed with every
/// member of `symmetries` (already discretized). Pseudo mode skips frames
/// without labels and throws kData for labels of frames not in `frames`.
std::vector<TrainingSample> make_training_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                              LabelMode mode, const std::vector<PoseLabelSet>& labels,
                                              const std::vector<Rotation>& symmetries, int crop_size,
                                              int image_size, int jobs = 1);

/// Crops with GT = render pose composed with `symmetries` ({identity} for the
/// render pose alone).
std::vector<ValidationSample> make_eval_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                            const std::vector<Rotation>& symmetries, int crop_size, int image_size,
                                            int jobs = 1);

}  // namespace symlabel

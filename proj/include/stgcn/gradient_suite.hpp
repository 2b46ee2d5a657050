#pragma once

#include <cstdint>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/gradcheck.hpp"

namespace stgcn {

/// The tiny model the suite differentiates end to end: 3 tracks of
/// 4 features over 8 steps, 3 classes, 2 hourglass levels, 2 stacked blocks.
ModelConfig tiny_model_config();

/// Finite-difference checks over every differentiable op, both losses, the
/// STGCN layer and the full model built from `model` (run on a random
/// 3-track, 8-step sequence matching its clusters).
std::vector<GradCheckReport> run_gradient_suite(const ModelConfig& model, std::uint64_t seed,
                                                const GradCheckOptions& opts = {});

}  // namespace stgcn

#pragma once

#include <string>

#include "ipfcad/blocking.hpp"
#include "ipfcad/cnn.hpp"
#include "ipfcad/segmentation.hpp"

namespace ipfcad {

// Flat key=value pipeline configuration. Unknown keys are rejected; values are
// validated by the owning module's invariants. dump() emits a canonical form
// that re-parses to an identical config.
struct PipelineConfig {
    BlockingParams blocking;
    SegmentationParams segmentation;
    TrainConfig training;
    std::string architecture = kStandardArchitectureSpec;
    int32_t window_center_hu = -600;
    int32_t window_width_hu = 1500;
    uint64_t seed = 0;

    // Layer stack from the architecture spec, sized to the blocking geometry.
    Architecture make_architecture() const {
        return parse_architecture(architecture, Shape3{blocking.block_side(), blocking.block_side(), 1},
                                  static_cast<float>(training.dropout_p));
    }

    void validate() const;

    bool operator==(const PipelineConfig&) const = default;
};

PipelineConfig parse_config(const std::string& text);
std::string dump_config(const PipelineConfig& config);

}  // namespace ipfcad

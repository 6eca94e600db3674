#pragma once

#include "ipfcad/evaluation.hpp"
#include "ipfcad/segmentation.hpp"

namespace ipfcad {

// Full per-patient preprocessing: segment the lungs, mask the volume, block
// and balance. When a reference mask is supplied the record carries
// dice(segmented, reference).
PatientRecord make_patient_record(uint16_t patient_id, const HuVolume& volume,
                                  const LabelMask& labels, const BinaryMask* reference_mask,
                                  const SegmentationParams& seg_params,
                                  const BlockingParams& blocking_params);

}  // namespace ipfcad

#pragma once

// Stream-level types shared by the generator, the tracker and the metrics:
// one detection as produced by a per-frame segmenter, and one timestep of an
// audio-visual stream.

#include <cstddef>
#include <optional>
#include <vector>

#include "seavis/numkernel.hpp"

namespace seavis {

struct Detection {
  DenseArray embedding;  // (C_e)
  double score = 0.0;    // in [0, 1]
  int class_id = 0;
  std::optional<DenseArray> mask;  // binary mask; absent at desk scale
  std::size_t frame = 0;

  // Ground-truth provenance, carried by synthetic streams.
  int gt_id = -1;
  bool gt_sounding = false;
};

struct StreamFrame {
  std::size_t frame = 0;
  DenseArray audio_feature;  // (C)
  std::vector<Detection> detections;
};

}  // namespace seavis

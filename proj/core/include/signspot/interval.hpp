#pragma once

#include <cstdint>
#include <string>

namespace signspot {

// Half-open frame interval of one sign instance; used for both ground
// truth and predictions. score is the mean run probability of a decoded
// interval (diagnostic only, ignored by the metric).
struct SignInterval {
  std::string video_id;
  int class_id = 0;
  int64_t start_frame = 0;  // inclusive
  int64_t end_frame = 0;    // exclusive
  double score = 0.0;

  int64_t length() const { return end_frame - start_frame; }
};

}  // namespace signspot

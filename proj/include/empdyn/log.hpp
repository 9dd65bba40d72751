#pragma once

#include <string>
#include <vector>

namespace empdyn {

// Diagnostics accumulated across an estimation run. Counters are always
// updated; detailed notes are capped so logs stay small on pathological data.
struct RunLog {
  long widen_events = 0;
  double max_widened_bandwidth = 0.0;
  long clamp_events = 0;
  std::vector<std::string> notes;

  static constexpr std::size_t kMaxNotes = 32;

  void note(const std::string& msg) {
    if (notes.size() < kMaxNotes) notes.push_back(msg);
  }
};

}  // namespace empdyn

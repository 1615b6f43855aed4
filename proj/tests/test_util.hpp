#pragma once

#include <vector>

#include "adaptq/config_space.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq::testing {

inline VideoStream make_video(Frame frames, std::vector<ActionInstance> instances = {}, std::int64_t id = 0) {
  VideoStream v{id, frames, std::move(instances)};
  validate_stream(v);
  return v;
}

// The four reference rows: fps 1282, 553, 285, 115.
inline ConfigTable reference_table(double tpr = 1.0, double tnr = 1.0) {
  return ConfigTable({{{150, 4, 8}, {1282.0, tpr, tnr}},
                      {{200, 4, 4}, {553.0, tpr, tnr}},
                      {{250, 6, 2}, {285.0, tpr, tnr}},
                      {{300, 6, 1}, {115.0, tpr, tnr}}});
}

}  // namespace adaptq::testing

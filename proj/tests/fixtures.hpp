#pragma once

// Small streams and trials shared by the harness-level tests.

#include <sstream>
#include <string>

#include "ctrlab/datagen.hpp"
#include "ctrlab/harness.hpp"
#include "ctrlab/io.hpp"

namespace fixture {

inline ctrlab::StreamSpec small_spec(std::uint64_t seed = 3) {
  ctrlab::StreamSpec s;
  s.vocab_per_field = 100;
  s.base_ctr = 0.05;
  s.seed = seed;
  return s;
}

inline const ctrlab::ClickStream& small_stream() {
  static const ctrlab::ClickStream stream(small_spec());
  return stream;
}

inline ctrlab::TrialConfig small_trial(std::int64_t hist_start = 0,
                                       std::int64_t hist_end = 40'000,
                                       std::int64_t online_end = 50'000) {
  ctrlab::TrialConfig c;
  c.hist_start = hist_start;
  c.hist_end = hist_end;
  c.online_end = online_end;
  c.model = {ctrlab::ArchKind::linear, {2048, 0}, 0};
  c.window = 5'000;
  c.timestamps_per_day = 5'000;
  c.seed = 7;
  return c;
}

inline std::string metrics_csv(const ctrlab::RunRecord& r) {
  std::ostringstream os;
  ctrlab::write_metrics_csv(os, r);
  return os.str();
}

}  // namespace fixture

// Times the data-parallel kernels against their serial references and the
// sequential training loop.
//
//   bench_kernels [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include <omp.h>

#include "ctrlab/datagen.hpp"
#include "ctrlab/harness.hpp"

using namespace ctrlab;

namespace {

double seconds(const std::function<void()>& f, int reps = 3) {
  double best = 1e30;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0)
                              .count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, double items) {
  std::printf("%-22s serial %8.3f s  parallel %8.3f s  speedup %5.2f  %8.2f M items/s\n",
              name, serial, parallel, serial / parallel, items / parallel / 1e6);
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
  omp_set_num_threads(threads);
  std::printf("threads %d\n", threads);

  StreamSpec spec;
  spec.vocab_per_field = 1000;
  spec.base_ctr = 0.02;
  const ClickStream stream(spec);
  const HashConfig hash{1u << 16, 0};
  const std::int64_t n = 1'000'000;

  row("generate", seconds([&] { stream.generate_serial(hash, 0, n); }),
      seconds([&] { stream.generate(hash, 0, n); }), n);
  row("count_labels", seconds([&] { stream.count_labels_serial(0, 4 * n); }),
      seconds([&] { stream.count_labels(0, 4 * n); }), 4 * n);
  row("calibration_scores",
      seconds([&] { calibration_scores_serial(stream, kCalibrationSamples); }),
      seconds([&] { calibration_scores(stream, kCalibrationSamples); }),
      kCalibrationSamples);
  const auto scores = calibration_scores(stream, kCalibrationSamples);
  row("marginal_ctr", seconds([&] { marginal_ctr_serial(scores, -4.0); }, 20),
      seconds([&] { marginal_ctr(scores, -4.0); }, 20), kCalibrationSamples);

  TrialConfig cfg;
  cfg.hist_end = n;
  cfg.online_end = n;
  cfg.window = 100'000;
  for (const ModelArch& m : {ModelArch{ArchKind::linear, hash, 0},
                             ModelArch{ArchKind::mlp, {4096, 0}, 16}}) {
    cfg.model = m;
    const double t = seconds([&] { run_trial(cfg, stream); }, 1);
    std::printf("%-22s %8.3f s  %8.2f M examples/s\n",
                ("trial " + m.label()).c_str(), t, n / t / 1e6);
  }
  return 0;
}

#pragma once

// Experiment documents: one JSON file declares the stream, the trial
// template and the experiment kind with its parameters. Parsing is strict:
// unknown keys and wrong types are rejected with the dotted key path, and
// syntax errors carry line and column.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrlab/datagen.hpp"
#include "ctrlab/harness.hpp"
#include "ctrlab/sweep.hpp"

namespace ctrlab {

enum class ExperimentKind { single, downsampling, distill, isocompute };

std::string to_string(ExperimentKind k);

struct DistillSection {
  DistillExperimentSpec spec;
  /// Teacher state at the earliest start date; trained from scratch if unset.
  std::optional<std::string> teacher_checkpoint;
};

struct IsoSection {
  std::vector<double> budgets;
  std::vector<ModelArch> models;
  IsoKnob knob = IsoKnob::rate;
  std::int64_t min_examples = 0;
};

struct ExperimentFile {
  ExperimentKind kind = ExperimentKind::single;
  std::uint64_t seed = 1;
  int parallelism = 1;
  std::string output_dir;
  StreamSpec stream;
  TrialConfig trial;
  DownsamplingSpec downsampling;
  DistillSection distill;
  IsoSection isocompute;

  /// Propagates the master seed to the stream, trials and teacher.
  void set_seed(std::uint64_t s);
  /// Runs every validation the chosen kind needs.
  void validate() const;

  std::vector<IsoComputeSpec> iso_specs() const;
};

/// Parses and validates a document. `origin` prefixes syntax errors.
ExperimentFile parse_experiment(const std::string& text,
                                const std::string& origin = "config");
ExperimentFile load_experiment(const std::string& path);

/// Normalized document with every default filled in. Excludes parallelism
/// and output_dir, which do not affect results.
nlohmann::json config_echo(const ExperimentFile& cfg);

nlohmann::json model_to_json(const ModelArch& m);

}  // namespace ctrlab

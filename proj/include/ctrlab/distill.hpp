#pragma once

// Teacher-student distillation by target interpolation.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctrlab/model.hpp"

namespace ctrlab {

class ClickStream;

struct NoDistill {};
/// Distill only before hist_start + fraction * (hist_end - hist_start).
struct Cutover {
  double fraction = 0.8;
};
/// Distill throughout, online phase included.
struct ContinuousDistill {};
using DistillSchedule = std::variant<NoDistill, Cutover, ContinuousDistill>;

struct DistillPolicy {
  double alpha = 0.5;
  DistillSchedule schedule = NoDistill{};

  void validate() const;
  bool enabled() const noexcept {
    return !std::holds_alternative<NoDistill>(schedule);
  }
  std::string describe() const;
};

/// (1 - alpha) * y + alpha * p_teacher.
double distill_target(int y, double p_teacher, double alpha);

/// Whether the teacher target applies at t, given the historical range the
/// cutover fraction refers to.
bool distill_active(const DistillPolicy& policy, std::int64_t t,
                    std::int64_t hist_start, std::int64_t hist_end);

struct TeacherSpec {
  ModelArch arch;
  /// Teacher history begins here; it must precede every student's start.
  std::int64_t start = 0;
  double learning_rate = kDefaultLearningRate;
  std::uint64_t seed = 1;

  void validate() const;
  /// Teacher must be strictly larger than the student.
  void validate_against(const ModelArch& student) const;
};

/// Teacher predictions for [t_begin, t_begin + size), each made before the
/// teacher trained on that example. Students only read it.
struct TeacherTrace {
  std::int64_t t_begin = 0;
  std::vector<double> predictions;
  /// Teacher state at t_begin (after its head-start history).
  std::optional<CtrModel> checkpoint;
  /// Teacher state at the end of the trace.
  std::optional<CtrModel> final_model;

  std::int64_t t_end() const noexcept {
    return t_begin + static_cast<std::int64_t>(predictions.size());
  }
  bool covers(std::int64_t t) const noexcept {
    return t >= t_begin && t < t_end();
  }
  double at(std::int64_t t) const;
};

/// Trains the teacher unsampled on [spec.start, trace_begin), checkpoints it,
/// then keeps training on [trace_begin, trace_end) while recording its
/// pre-update prediction for every example: the lockstep sequence students
/// consume during both the historical and online phases.
TeacherTrace train_teacher(const TeacherSpec& spec, const ClickStream& stream,
                           std::int64_t trace_begin, std::int64_t trace_end);

/// Same, but resumes from a checkpoint taken at trace_begin.
TeacherTrace continue_teacher(const CtrModel& checkpoint,
                              const TeacherSpec& spec,
                              const ClickStream& stream,
                              std::int64_t trace_begin, std::int64_t trace_end);

}  // namespace ctrlab

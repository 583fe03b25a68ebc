#include "ctrlab/distill.hpp"

#include <algorithm>
#include <cmath>

#include "ctrlab/datagen.hpp"
#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace {

constexpr std::int64_t kTeacherChunk = 65536;

void train_range(CtrModel& model, const ClickStream& stream, std::int64_t a,
                 std::int64_t b, double lr, std::vector<double>* record) {
  std::vector<Example> chunk;
  for (std::int64_t lo = a; lo < b; lo += kTeacherChunk) {
    const std::int64_t hi = std::min(b, lo + kTeacherChunk);
    stream.generate_into(model.arch().hash, lo, hi, chunk);
    for (const Example& x : chunk) {
      if (record) record->push_back(model.predict(x));
      model.grad_step(x, x.label, lr);
    }
  }
}

}  // namespace

void DistillPolicy::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("distill.alpha", "must be in [0,1]");
  if (const auto* c = std::get_if<Cutover>(&schedule))
    if (!(c->fraction > 0.0 && c->fraction < 1.0))
      throw ConfigError("distill.fraction", "must be in (0,1)");
}

std::string DistillPolicy::describe() const {
  if (std::holds_alternative<NoDistill>(schedule)) return "none";
  if (std::holds_alternative<ContinuousDistill>(schedule)) return "continuous";
  return "cutover-" + format_real(std::get<Cutover>(schedule).fraction);
}

double distill_target(int y, double p_teacher, double alpha) {
  return (1.0 - alpha) * y + alpha * p_teacher;
}

bool distill_active(const DistillPolicy& policy, std::int64_t t,
                    std::int64_t hist_start, std::int64_t hist_end) {
  return std::visit(
      [&](const auto& s) -> bool {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, NoDistill>) {
          return false;
        } else if constexpr (std::is_same_v<S, ContinuousDistill>) {
          return true;
        } else {
          const double cut =
              static_cast<double>(hist_start) +
              s.fraction * static_cast<double>(hist_end - hist_start);
          return static_cast<double>(t) < cut;
        }
      },
      policy.schedule);
}

void TeacherSpec::validate() const {
  arch.validate();
  if (start < 0) throw ConfigError("teacher.start", "must be >= 0");
  if (!(learning_rate > 0.0))
    throw ConfigError("teacher.learning_rate", "must be > 0");
}

void TeacherSpec::validate_against(const ModelArch& student) const {
  if (arch.param_count() <= student.param_count())
    throw ConfigError("teacher.model",
                      "teacher must have more parameters than the student (" +
                          std::to_string(arch.param_count()) +
                          " <= " + std::to_string(student.param_count()) + ")");
}

double TeacherTrace::at(std::int64_t t) const {
  if (!covers(t))
    throw Error("teacher trace does not cover t=" + std::to_string(t));
  return predictions[static_cast<std::size_t>(t - t_begin)];
}

TeacherTrace continue_teacher(const CtrModel& checkpoint,
                              const TeacherSpec& spec,
                              const ClickStream& stream,
                              std::int64_t trace_begin,
                              std::int64_t trace_end) {
  validate_range(trace_begin, trace_end);
  if (!(checkpoint.arch() == spec.arch))
    throw Error("teacher checkpoint architecture does not match the teacher model");
  TeacherTrace trace;
  trace.t_begin = trace_begin;
  trace.checkpoint = checkpoint;
  trace.predictions.reserve(static_cast<std::size_t>(trace_end - trace_begin));
  CtrModel model = checkpoint;
  train_range(model, stream, trace_begin, trace_end, spec.learning_rate,
              &trace.predictions);
  trace.final_model = std::move(model);
  return trace;
}

TeacherTrace train_teacher(const TeacherSpec& spec, const ClickStream& stream,
                           std::int64_t trace_begin, std::int64_t trace_end) {
  spec.validate();
  if (spec.start > trace_begin)
    throw ConfigError("teacher.start",
                      "teacher must start no later than every student");
  CtrModel model(spec.arch, spec.seed);
  train_range(model, stream, spec.start, trace_begin, spec.learning_rate,
              nullptr);
  return continue_teacher(model, spec, stream, trace_begin, trace_end);
}

}  // namespace ctrlab

#include "kinscope/kinscope.h"

#include <cstring>
#include <new>
#include <string>

#include "app/workflows.hpp"
#include "config/run_config.hpp"
#include "core/errors.hpp"
#include "trainer/checkpoint.hpp"

struct ks_config {
  kinscope::RunConfig value;
};

struct ks_model {
  kinscope::LoadedCheckpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

ks_status from_code(kinscope::ErrorCode code) {
  using kinscope::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return KS_ERR_INVALID_ARGUMENT;
    case ErrorCode::parse: return KS_ERR_PARSE;
    case ErrorCode::validation: return KS_ERR_VALIDATION;
    case ErrorCode::config: return KS_ERR_CONFIG;
    case ErrorCode::lookup: return KS_ERR_LOOKUP;
    case ErrorCode::transport: return KS_ERR_TRANSPORT;
    case ErrorCode::shape: return KS_ERR_SHAPE;
    case ErrorCode::numeric: return KS_ERR_NUMERIC;
    case ErrorCode::data: return KS_ERR_DATA;
    case ErrorCode::state: return KS_ERR_STATE;
    case ErrorCode::label: return KS_ERR_LABEL;
    case ErrorCode::io: return KS_ERR_IO;
  }
  return KS_ERR_INTERNAL;
}

ks_status fail(ks_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class F>
ks_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return KS_OK;
  } catch (const kinscope::Error& e) {
    return fail(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(KS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(KS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(KS_ERR_INTERNAL, "unknown error");
  }
}

ks_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > 0) {
    if (cap < s.size() + 1) return fail(KS_ERR_INVALID_ARGUMENT, "buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
  }
  g_last_error.clear();
  return KS_OK;
}

kinscope::app::LineSink sink_of(ks_line_sink sink, void* user) {
  return [sink, user](std::string_view line) {
    if (!sink) return;
    const std::string copy(line);
    sink(copy.c_str(), user);
  };
}

#define KS_REQUIRE(cond, what) \
  if (!(cond)) return fail(KS_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* ks_status_name(ks_status status) {
  switch (status) {
    case KS_OK: return "KS_OK";
    case KS_ERR_INVALID_ARGUMENT: return "KS_ERR_INVALID_ARGUMENT";
    case KS_ERR_PARSE: return "KS_ERR_PARSE";
    case KS_ERR_VALIDATION: return "KS_ERR_VALIDATION";
    case KS_ERR_CONFIG: return "KS_ERR_CONFIG";
    case KS_ERR_LOOKUP: return "KS_ERR_LOOKUP";
    case KS_ERR_TRANSPORT: return "KS_ERR_TRANSPORT";
    case KS_ERR_SHAPE: return "KS_ERR_SHAPE";
    case KS_ERR_NUMERIC: return "KS_ERR_NUMERIC";
    case KS_ERR_DATA: return "KS_ERR_DATA";
    case KS_ERR_STATE: return "KS_ERR_STATE";
    case KS_ERR_LABEL: return "KS_ERR_LABEL";
    case KS_ERR_IO: return "KS_ERR_IO";
    case KS_ERR_INTERNAL: return "KS_ERR_INTERNAL";
  }
  return "KS_ERR_UNKNOWN";
}

const char* ks_last_error(void) { return g_last_error.c_str(); }

const char* ks_version(void) { return "0.1.0"; }

ks_status ks_config_create(ks_config** out) {
  KS_REQUIRE(out, "out is NULL");
  *out = nullptr;
  return guard([&] { *out = new ks_config{}; });
}

ks_status ks_config_load(const char* path, ks_config** out) {
  KS_REQUIRE(out && path, "path and out must be non-NULL");
  *out = nullptr;
  return guard([&] { *out = new ks_config{kinscope::load_run_config(path)}; });
}

ks_status ks_config_set(ks_config* config, const char* key, const char* value) {
  KS_REQUIRE(config && key && value, "config, key and value must be non-NULL");
  return guard([&] { kinscope::set_config_value(config->value, key, value); });
}

ks_status ks_config_get(const ks_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  KS_REQUIRE(config && key, "config and key must be non-NULL");
  std::string value;
  const auto s = guard([&] { value = kinscope::get_config_value(config->value, key); });
  return s == KS_OK ? copy_out(value, buf, cap, needed) : s;
}

ks_status ks_config_dump(const ks_config* config, char* buf, size_t cap, size_t* needed) {
  KS_REQUIRE(config, "config is NULL");
  std::string text;
  const auto s = guard([&] { text = kinscope::dump_run_config(config->value); });
  return s == KS_OK ? copy_out(text, buf, cap, needed) : s;
}

void ks_config_destroy(ks_config* config) { delete config; }

ks_status ks_model_load(const char* checkpoint_path, ks_model** out) {
  KS_REQUIRE(out && checkpoint_path, "path and out must be non-NULL");
  *out = nullptr;
  return guard([&] { *out = new ks_model{kinscope::load_checkpoint(checkpoint_path)}; });
}

void ks_model_destroy(ks_model* model) { delete model; }

ks_status ks_model_shape(const ks_model* model, size_t* n_models, size_t* n_families) {
  KS_REQUIRE(model, "model is NULL");
  const auto& reg = model->checkpoint.model->config().registry;
  if (n_models) *n_models = reg.model_count();
  if (n_families) *n_families = reg.family_count();
  g_last_error.clear();
  return KS_OK;
}

ks_status ks_model_family_name(const ks_model* model, size_t index, char* buf, size_t cap, size_t* needed) {
  KS_REQUIRE(model, "model is NULL");
  const auto& reg = model->checkpoint.model->config().registry;
  if (index >= reg.family_count()) return fail(KS_ERR_INVALID_ARGUMENT, "family index out of range");
  return copy_out(reg.family_name(index), buf, cap, needed);
}

ks_status ks_model_detect(const ks_model* model, const double* const* rows, const size_t* lengths, size_t n_rows,
                          double* y_b, double* family_probs) {
  KS_REQUIRE(model && rows && lengths && y_b, "model, rows, lengths and y_b must be non-NULL");
  const auto& m = *model->checkpoint.model;
  if (!m.uses_probability_features())
    return fail(KS_ERR_STATE, "this checkpoint scores text features; use ks_run_detect");
  if (n_rows != m.config().registry.model_count())
    return fail(KS_ERR_SHAPE, "expected " + std::to_string(m.config().registry.model_count()) + " rows, got " +
                                  std::to_string(n_rows));
  return guard([&] {
    std::vector<std::vector<double>> data(n_rows);
    for (size_t i = 0; i < n_rows; ++i) {
      if (!rows[i] && lengths[i]) throw kinscope::DataError("row " + std::to_string(i) + " is NULL");
      data[i].assign(rows[i], rows[i] + lengths[i]);
      for (double& v : data[i]) v = kinscope::clip_logprob(v);
    }
    kinscope::LabeledSample sample;
    sample.id = "input";
    const auto prepared = m.prepare(sample, kinscope::TokenProbMatrix::from_rows("input", std::move(data)));
    const auto preds = m.predict(std::span<const kinscope::PreparedSample>(&prepared, 1));
    *y_b = preds[0].y_b;
    if (family_probs)
      for (size_t f = 0; f < preds[0].family_probs.size(); ++f) family_probs[f] = preds[0].family_probs[f];
  });
}

#define KS_RUN(name, call)                                              \
  ks_status name(const ks_config* config, ks_line_sink sink, void* user) { \
    KS_REQUIRE(config, "config is NULL");                               \
    return guard([&] { call(config->value, sink_of(sink, user)); });    \
  }

KS_RUN(ks_run_synth, kinscope::app::run_synth)
KS_RUN(ks_run_score, kinscope::app::run_score)
KS_RUN(ks_run_train, kinscope::app::run_train)
KS_RUN(ks_run_detect, kinscope::app::run_detect)
KS_RUN(ks_run_eval, kinscope::app::run_eval)
KS_RUN(ks_run_benchmark, kinscope::app::run_benchmark)

#undef KS_RUN

ks_status ks_run_simulate(const ks_config* config, const char* mode, ks_line_sink sink, void* user) {
  KS_REQUIRE(config && mode, "config and mode must be non-NULL");
  return guard([&] { kinscope::app::run_simulate(config->value, mode, sink_of(sink, user)); });
}

}  // extern "C"

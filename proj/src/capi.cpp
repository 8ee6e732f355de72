// Copyright 2026 The FloWM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowm/flowm.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "app.hpp"
#include "flowm/config.hpp"
#include "flowm/error.hpp"
#include "flowm/model.hpp"

struct flowm_config {
  flowm::config::RawConfig raw;
};

struct flowm_model {
  flowm::model::Checkpoint ck;
};

namespace {

thread_local std::string g_last_error;

flowm_status fail(flowm_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps library exceptions onto status codes.
template <typename F>
flowm_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const flowm::IoError& e) {
    return fail(FLOWM_ERR_IO, e.what());
  } catch (const flowm::FormatError& e) {
    return fail(FLOWM_ERR_IO, e.what());
  } catch (const flowm::TruncatedError& e) {
    return fail(FLOWM_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(FLOWM_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FLOWM_ERR_CONFIG, "out of memory");
  } catch (const std::exception& e) {
    return fail(FLOWM_ERR_CONFIG, e.what());
  } catch (...) {
    return fail(FLOWM_ERR_CONFIG, "unknown error");
  }
}

flowm::app::LogFn logger(flowm_log_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& s) { fn(s.c_str(), user); };
}

char* dup_string(const std::string& s) {
  char* p = new char[s.size() + 1];
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

flowm::config::RunConfig resolved(const flowm_config* cfg) {
  return cfg ? flowm::config::resolve(cfg->raw) : flowm::config::resolve({});
}

bool missing(const void* p) { return p == nullptr; }

}  // namespace

extern "C" {

const char* flowm_version(void) { return FLOWM_VERSION; }

const char* flowm_last_error(void) { return g_last_error.c_str(); }

flowm_status flowm_config_new(flowm_config** out) {
  if (missing(out)) return fail(FLOWM_ERR_CONFIG, "null output pointer");
  return guarded([&] {
    *out = new flowm_config{};
    return FLOWM_OK;
  });
}

flowm_status flowm_config_load(const char* path, flowm_config** out) {
  if (missing(path) || missing(out)) return fail(FLOWM_ERR_CONFIG, "null argument");
  return guarded([&] {
    *out = new flowm_config{flowm::config::read_config(path)};
    return FLOWM_OK;
  });
}

flowm_status flowm_config_set(flowm_config* cfg, const char* key, const char* value) {
  if (missing(cfg) || missing(key) || missing(value)) {
    return fail(FLOWM_ERR_CONFIG, "null argument");
  }
  return guarded([&] {
    flowm::config::set_override(cfg->raw, key, value);
    return FLOWM_OK;
  });
}

flowm_status flowm_config_dump(const flowm_config* cfg, char** out) {
  if (missing(out)) return fail(FLOWM_ERR_CONFIG, "null output pointer");
  return guarded([&] {
    *out = dup_string(flowm::config::to_text(resolved(cfg)));
    return FLOWM_OK;
  });
}

void flowm_config_free(flowm_config* cfg) { delete cfg; }

void flowm_string_free(char* s) { delete[] s; }

flowm_status flowm_gen_data(const flowm_config* cfg, const char* out_dir, flowm_log_fn log,
                            void* user) {
  if (missing(out_dir)) return fail(FLOWM_ERR_CONFIG, "null output directory");
  return guarded([&] {
    flowm::app::gen_data(resolved(cfg), out_dir, logger(log, user));
    return FLOWM_OK;
  });
}

flowm_status flowm_train(const flowm_config* cfg, const char* data, const char* out_dir,
                         flowm_log_fn log, void* user) {
  if (missing(data) || missing(out_dir)) return fail(FLOWM_ERR_CONFIG, "null path");
  return guarded([&] {
    flowm::app::train(resolved(cfg), data, out_dir, logger(log, user));
    return FLOWM_OK;
  });
}

flowm_status flowm_eval(const flowm_config* cfg, const char* const* checkpoints, size_t n,
                        const char* data, const char* out_dir, flowm_log_fn log, void* user) {
  if (missing(data) || missing(out_dir)) return fail(FLOWM_ERR_CONFIG, "null path");
  if (n == 0 || missing(checkpoints)) return fail(FLOWM_ERR_CONFIG, "no checkpoints given");
  return guarded([&] {
    std::vector<std::string> specs;
    for (size_t i = 0; i < n; ++i) {
      if (missing(checkpoints[i])) return fail(FLOWM_ERR_CONFIG, "null checkpoint path");
      specs.emplace_back(checkpoints[i]);
    }
    flowm::app::evaluate(resolved(cfg), specs, data, out_dir, logger(log, user));
    return FLOWM_OK;
  });
}

flowm_status flowm_render(const flowm_config* cfg, const char* checkpoint, const char* data,
                          int episode, int horizon, const char* out_dir) {
  if (missing(checkpoint) || missing(data) || missing(out_dir)) {
    return fail(FLOWM_ERR_CONFIG, "null path");
  }
  return guarded([&] {
    flowm::app::render(resolved(cfg), checkpoint, data, episode, horizon, out_dir);
    return FLOWM_OK;
  });
}

flowm_status flowm_verify(const char* suite, uint64_t seed, int trials, char** report) {
  if (missing(suite)) return fail(FLOWM_ERR_CONFIG, "null suite name");
  return guarded([&] {
    const flowm::app::VerifyOutcome v = flowm::app::verify(suite, seed, trials);
    if (report) *report = dup_string(v.table);
    if (!v.passed) return fail(FLOWM_ERR_CHECK, "equivariance checks failed");
    return FLOWM_OK;
  });
}

flowm_status flowm_model_load(const char* path, flowm_model** out) {
  if (missing(path) || missing(out)) return fail(FLOWM_ERR_CONFIG, "null argument");
  return guarded([&] {
    *out = new flowm_model{flowm::model::load_checkpoint(path)};
    return FLOWM_OK;
  });
}

size_t flowm_model_param_count(const flowm_model* m) { return m ? m->ck.params.count() : 0; }

void flowm_model_free(flowm_model* m) { delete m; }

}  // extern "C"

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

/* C interface to the FloWM library. All handles are opaque. Every function
 * that can fail returns a flowm_status; flowm_last_error() then describes the
 * failure for the calling thread. */

#ifndef FLOWM_FLOWM_H_
#define FLOWM_FLOWM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FLOWM_API __declspec(dllexport)
#else
#define FLOWM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum flowm_status {
  FLOWM_OK = 0,
  FLOWM_ERR_CONFIG = 1, /* invalid configuration, arguments or shapes */
  FLOWM_ERR_CHECK = 2,  /* an equivariance check failed */
  FLOWM_ERR_IO = 3      /* missing, unreadable or malformed files */
} flowm_status;

typedef struct flowm_config flowm_config;
typedef struct flowm_model flowm_model;

/* Receives one human-readable progress line at a time. */
typedef void (*flowm_log_fn)(const char* line, void* user);

FLOWM_API const char* flowm_version(void);
FLOWM_API const char* flowm_last_error(void);

/* Configuration. Keys are "section.key"; values use the config file syntax.
 * flowm_config_set rejects unknown keys at once; values are validated when the
 * configuration is used, so related keys may be set in any order. */
FLOWM_API flowm_status flowm_config_new(flowm_config** out);
FLOWM_API flowm_status flowm_config_load(const char* path, flowm_config** out);
FLOWM_API flowm_status flowm_config_set(flowm_config* cfg, const char* key, const char* value);
/* Resolved configuration as text; release with flowm_string_free. */
FLOWM_API flowm_status flowm_config_dump(const flowm_config* cfg, char** out);
FLOWM_API void flowm_config_free(flowm_config* cfg);

FLOWM_API void flowm_string_free(char* s);

FLOWM_API flowm_status flowm_gen_data(const flowm_config* cfg, const char* out_dir,
                                      flowm_log_fn log, void* user);
/* data is a directory holding train.fwm (and optionally val.fwm) or a single
 * dataset file. */
FLOWM_API flowm_status flowm_train(const flowm_config* cfg, const char* data,
                                   const char* out_dir, flowm_log_fn log, void* user);
/* checkpoints holds n entries of the form "path" or "label=path". */
FLOWM_API flowm_status flowm_eval(const flowm_config* cfg, const char* const* checkpoints,
                                  size_t n, const char* data, const char* out_dir,
                                  flowm_log_fn log, void* user);
FLOWM_API flowm_status flowm_render(const flowm_config* cfg, const char* checkpoint,
                                    const char* data, int episode, int horizon,
                                    const char* out_dir);
/* Runs an equivariance suite (flow, theorem, closure, relative, all). The
 * report is always produced when the suite ran; FLOWM_ERR_CHECK means at least
 * one check failed. */
FLOWM_API flowm_status flowm_verify(const char* suite, uint64_t seed, int trials,
                                    char** report);

FLOWM_API flowm_status flowm_model_load(const char* path, flowm_model** out);
FLOWM_API size_t flowm_model_param_count(const flowm_model* m);
FLOWM_API void flowm_model_free(flowm_model* m);

#ifdef __cplusplus
}
#endif

#endif /* FLOWM_FLOWM_H_ */

// Copyright 2026 The ccbp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CCBP_CCBP_H_
#define CCBP_CCBP_H_

/* C interface to the contrastive back-propagation library. All objects are
 * opaque handles; every fallible call returns a ccbp_status and leaves a
 * message retrievable with ccbp_last_error() on the calling thread. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with ccbp_string_free(). */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(CCBP_BUILDING)
#    define CCBP_API __declspec(dllexport)
#  else
#    define CCBP_API __declspec(dllimport)
#  endif
#else
#  define CCBP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ccbp_status {
  CCBP_OK = 0,
  CCBP_INVALID_ARGUMENT = 1,
  CCBP_SHAPE_MISMATCH = 2,
  CCBP_UNKNOWN_LAYER = 3,
  CCBP_UNSUPPORTED = 4,
  CCBP_NOT_DIFFERENTIABLE = 5,
  CCBP_IO = 6,
  CCBP_PARSE = 7,
  CCBP_EMPTY_RESULT = 8,
  CCBP_INTERNAL = 9
} ccbp_status;

typedef struct ccbp_model ccbp_model;
typedef struct ccbp_dataset ccbp_dataset;
typedef struct ccbp_map ccbp_map;

typedef void (*ccbp_log_fn)(const char* message, void* user);

CCBP_API const char* ccbp_version(void);
CCBP_API const char* ccbp_status_name(ccbp_status status);
/* Message of the last failed call on this thread; "" when none. */
CCBP_API const char* ccbp_last_error(void);
/* Progress messages of long-running calls. NULL disables logging. */
CCBP_API void ccbp_set_log_callback(ccbp_log_fn fn, void* user);
CCBP_API void ccbp_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

/* `ref` is a toy model name (trained on first use under the artifact root)
 * or "dir/id" for a saved model. artifact_root may be NULL. */
CCBP_API ccbp_status ccbp_model_load(const char* ref, const char* artifact_root,
                                     ccbp_model** out);
/* JSON: model_id, kind, num_classes, input_shape, layer_names. */
CCBP_API ccbp_status ccbp_model_info(const ccbp_model* model, char** json_out);
/* `pixels` holds one (C, H, W) image; `logits` receives num_classes values. */
CCBP_API ccbp_status ccbp_model_logits(const ccbp_model* model, const double* pixels,
                                       size_t pixel_count, double* logits,
                                       size_t logit_count);
CCBP_API void ccbp_model_free(ccbp_model* model);

/* ---- datasets -------------------------------------------------------- */

CCBP_API ccbp_status ccbp_dataset_load(const char* manifest_path, size_t limit,
                                       ccbp_dataset** out);
CCBP_API size_t ccbp_dataset_size(const ccbp_dataset* data);
CCBP_API size_t ccbp_dataset_pixel_count(const ccbp_dataset* data);
CCBP_API ccbp_status ccbp_dataset_image(const ccbp_dataset* data, size_t index,
                                        double* pixels, size_t pixel_count);
CCBP_API ccbp_status ccbp_dataset_label(const ccbp_dataset* data, size_t index,
                                        size_t* label);
CCBP_API void ccbp_dataset_free(ccbp_dataset* data);

/* ---- explanations ---------------------------------------------------- */

/* request_json keys: method, seed_mode, relu_mode, target, layer,
 * rollout_residual. Omitted keys take their defaults; without a numeric
 * target the predicted class is explained. */
CCBP_API ccbp_status ccbp_explain(const ccbp_model* model, const double* pixels,
                                  size_t pixel_count, const char* request_json,
                                  ccbp_map** out);
/* Same request keys plus combinator and mean_scaled. */
CCBP_API ccbp_status ccbp_contrast(const ccbp_model* model, const double* pixels,
                                   size_t pixel_count, const char* request_json,
                                   ccbp_map** out);
CCBP_API ccbp_status ccbp_map_shape(const ccbp_map* map, size_t* height, size_t* width);
/* Row-major values, valid until ccbp_map_free. */
CCBP_API const double* ccbp_map_data(const ccbp_map* map);
/* Provenance sidecar as JSON. */
CCBP_API ccbp_status ccbp_map_json(const ccbp_map* map, char** json_out);
CCBP_API void ccbp_map_free(ccbp_map* map);

/* Softmax-seed map against p_t (1 - p_t) times the weighted contrast. */
CCBP_API ccbp_status ccbp_verify(const ccbp_model* model, const double* pixels,
                                 size_t pixel_count, const char* request_json,
                                 double* max_rel_error, double* scale_factor,
                                 double* expected_scale);

/* ---- perturbation ---------------------------------------------------- */

/* One sign step of size epsilon / n_total inside the epsilon ball around x0
 * and the unit box. All arrays hold `count` values. */
CCBP_API ccbp_status ccbp_perturb_step(const double* x, const double* x0,
                                       const double* phi, size_t count, double epsilon,
                                       size_t n_total, double* out);

/* ---- runs ------------------------------------------------------------ */

/* Runs a command (explain, contrast, perturb, ablate, visualize, regress,
 * verify, reproduce, bootstrap). `target` names the reproduce bundle and may
 * be NULL otherwise. `exit_code` receives the run's exit status and
 * `summary_json` (optional) a JSON summary including run_id and output_dir.
 * The status reports errors that stop the run before it starts. */
CCBP_API ccbp_status ccbp_run(const char* command, const char* target,
                              const char* config_path, const char* const* overrides,
                              size_t override_count, const char* artifact_root,
                              size_t jobs, int* exit_code, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* CCBP_CCBP_H_ */

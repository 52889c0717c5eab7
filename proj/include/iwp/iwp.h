// Copyright 2026 The iwprune Authors. All Rights Reserved.
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
// =============================================================================

/* C interface to the iwprune library. Every object is an opaque handle owned
 * by the caller and released with the matching *_free function. Functions
 * return an iwp_status; on failure iwp_last_error() describes what happened. */

#ifndef IWP_IWP_H_
#define IWP_IWP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IWP_API __declspec(dllexport)
#else
#define IWP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iwp_status {
  IWP_OK = 0,
  IWP_ERR_INVALID_ARGUMENT = 1, /* null pointer or undersized buffer */
  IWP_ERR_STRUCTURAL = 2,       /* length mismatch, empty input */
  IWP_ERR_INPUT = 3,            /* non-finite or out-of-range values */
  IWP_ERR_CONFIG = 4,
  IWP_ERR_CODEC = 5,            /* corrupted mask payload */
  IWP_ERR_PROTOCOL = 6,         /* replicas disagreed */
  IWP_ERR_DIVERGED = 7,         /* training produced a non-finite loss */
  IWP_ERR_IO = 8,
  IWP_ERR_INTERNAL = 9
} iwp_status;

IWP_API const char* iwp_version(void);
IWP_API const char* iwp_status_string(iwp_status status);
/* Message of the last failed call on this thread ("" after a success). */
IWP_API const char* iwp_last_error(void);

/* ---- experiments ------------------------------------------------------- */

typedef struct iwp_experiment iwp_experiment;

typedef struct iwp_run_summary {
  uint64_t steps;
  double final_loss;
  double final_accuracy; /* NaN for regression tasks */
  double mean_compression_ratio;
  double mean_density;
  double bytes_total;
} iwp_run_summary;

IWP_API iwp_status iwp_experiment_load(const char* config_path,
                                       iwp_experiment** out);
IWP_API iwp_status iwp_experiment_parse(const char* config_json,
                                        iwp_experiment** out);
IWP_API void iwp_experiment_free(iwp_experiment* exp);

/* Overrides training.seed. */
IWP_API iwp_status iwp_experiment_set_seed(iwp_experiment* exp, uint64_t seed);
IWP_API iwp_status iwp_experiment_set_output_dir(iwp_experiment* exp,
                                                 const char* dir);
IWP_API const char* iwp_experiment_output_dir(const iwp_experiment* exp);

/* Resolved config as JSON. Copies at most cap bytes including the NUL;
 * *needed (optional) receives the full size including the NUL. */
IWP_API iwp_status iwp_experiment_manifest(const iwp_experiment* exp, char* buf,
                                           size_t cap, size_t* needed);

/* Runs the experiment and writes metrics.csv, bandwidth.csv and
 * manifest.json into the output directory. */
IWP_API iwp_status iwp_experiment_run(iwp_experiment* exp);
/* Valid after a successful iwp_experiment_run. */
IWP_API iwp_status iwp_experiment_summary(const iwp_experiment* exp,
                                          iwp_run_summary* out);

/* ---- run comparison ---------------------------------------------------- */

typedef struct iwp_comparison iwp_comparison;

IWP_API iwp_status iwp_compare_runs(const char* dir_a, const char* dir_b,
                                    iwp_comparison** out);
/* One header line and one data row; owned by the handle. */
IWP_API const char* iwp_comparison_csv(const iwp_comparison* cmp);
IWP_API double iwp_comparison_bytes_ratio(const iwp_comparison* cmp);
/* Writes comparison.csv into dir (created if missing). */
IWP_API iwp_status iwp_comparison_write(const iwp_comparison* cmp,
                                        const char* dir);
IWP_API void iwp_comparison_free(iwp_comparison* cmp);

/* ---- primitives -------------------------------------------------------- */

IWP_API size_t iwp_mask_encoded_size(size_t bit_length);
/* bits: one byte per bit (nonzero = set). payload_cap must be at least
 * iwp_mask_encoded_size(bit_length). */
IWP_API iwp_status iwp_mask_encode(const uint8_t* bits, size_t bit_length,
                                   uint8_t* payload, size_t payload_cap);
IWP_API iwp_status iwp_mask_decode(const uint8_t* payload, size_t payload_len,
                                   size_t bit_length, uint8_t* bits,
                                   size_t bits_cap);

IWP_API iwp_status iwp_compute_importance(const double* grad,
                                          const double* weights, size_t n,
                                          double eps, double* scores);

IWP_API iwp_status iwp_compression_ratio(size_t nnz, size_t mask_bytes,
                                         size_t value_bytes, size_t index_bytes,
                                         size_t dense_bytes, double* out);

#ifdef __cplusplus
}
#endif

#endif /* IWP_IWP_H_ */

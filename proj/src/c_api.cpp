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

#include "iwp/iwp.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>

#include "iwp/error.hpp"
#include "iwp/experiment.hpp"
#include "iwp/importance.hpp"
#include "iwp/sparse_codec.hpp"

struct iwp_experiment {
  iwp::ExperimentConfig config;
  std::optional<iwp::RunSummary> summary;
};

struct iwp_comparison {
  iwp::Comparison comparison;
  std::string csv;
};

namespace {

thread_local std::string g_last_error;

iwp_status status_of(iwp::ErrorKind kind) {
  switch (kind) {
    case iwp::ErrorKind::kStructural:
      return IWP_ERR_STRUCTURAL;
    case iwp::ErrorKind::kInput:
      return IWP_ERR_INPUT;
    case iwp::ErrorKind::kConfig:
      return IWP_ERR_CONFIG;
    case iwp::ErrorKind::kCodec:
      return IWP_ERR_CODEC;
    case iwp::ErrorKind::kProtocol:
      return IWP_ERR_PROTOCOL;
    case iwp::ErrorKind::kDivergence:
      return IWP_ERR_DIVERGED;
    case iwp::ErrorKind::kIo:
      return IWP_ERR_IO;
  }
  return IWP_ERR_INTERNAL;
}

iwp_status fail_with(iwp_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
iwp_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return IWP_OK;
  } catch (const iwp::Error& e) {
    return fail_with(status_of(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail_with(IWP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(IWP_ERR_INTERNAL, "unknown exception");
  }
}

iwp_status null_argument(const char* what) {
  return fail_with(IWP_ERR_INVALID_ARGUMENT, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* iwp_version(void) { return "0.1.0"; }

const char* iwp_status_string(iwp_status status) {
  switch (status) {
    case IWP_OK:
      return "ok";
    case IWP_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case IWP_ERR_STRUCTURAL:
      return "structural error";
    case IWP_ERR_INPUT:
      return "input error";
    case IWP_ERR_CONFIG:
      return "configuration error";
    case IWP_ERR_CODEC:
      return "codec error";
    case IWP_ERR_PROTOCOL:
      return "protocol error";
    case IWP_ERR_DIVERGED:
      return "diverged";
    case IWP_ERR_IO:
      return "i/o error";
    case IWP_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* iwp_last_error(void) { return g_last_error.c_str(); }

iwp_status iwp_experiment_load(const char* config_path, iwp_experiment** out) {
  if (config_path == nullptr) return null_argument("config_path");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto exp = std::make_unique<iwp_experiment>();
    exp->config = iwp::load_config(config_path);
    *out = exp.release();
  });
}

iwp_status iwp_experiment_parse(const char* config_json, iwp_experiment** out) {
  if (config_json == nullptr) return null_argument("config_json");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto exp = std::make_unique<iwp_experiment>();
    exp->config = iwp::parse_config(config_json);
    *out = exp.release();
  });
}

void iwp_experiment_free(iwp_experiment* exp) { delete exp; }

iwp_status iwp_experiment_set_seed(iwp_experiment* exp, uint64_t seed) {
  if (exp == nullptr) return null_argument("experiment");
  exp->config.training.seed = seed;
  exp->summary.reset();
  g_last_error.clear();
  return IWP_OK;
}

iwp_status iwp_experiment_set_output_dir(iwp_experiment* exp, const char* dir) {
  if (exp == nullptr) return null_argument("experiment");
  if (dir == nullptr) return null_argument("dir");
  if (*dir == '\0') {
    return fail_with(IWP_ERR_CONFIG, "output_dir: must not be empty");
  }
  exp->config.output_dir = dir;
  g_last_error.clear();
  return IWP_OK;
}

const char* iwp_experiment_output_dir(const iwp_experiment* exp) {
  return exp == nullptr ? "" : exp->config.output_dir.c_str();
}

iwp_status iwp_experiment_manifest(const iwp_experiment* exp, char* buf,
                                   size_t cap, size_t* needed) {
  if (exp == nullptr) return null_argument("experiment");
  const std::string text = iwp::manifest_json(exp->config);
  if (needed != nullptr) *needed = text.size() + 1;
  if (buf == nullptr || cap < text.size() + 1) {
    if (buf != nullptr && cap > 0) buf[0] = '\0';
    return fail_with(IWP_ERR_INVALID_ARGUMENT,
                     "manifest buffer needs " + std::to_string(text.size() + 1) +
                         " bytes");
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
  g_last_error.clear();
  return IWP_OK;
}

iwp_status iwp_experiment_run(iwp_experiment* exp) {
  if (exp == nullptr) return null_argument("experiment");
  exp->summary.reset();
  return guarded([&] {
    const iwp::ExperimentResult result = iwp::run_config(exp->config);
    iwp::write_run(exp->config.output_dir, exp->config, result);
    exp->summary = iwp::summarize(result.rows);
  });
}

iwp_status iwp_experiment_summary(const iwp_experiment* exp,
                                  iwp_run_summary* out) {
  if (exp == nullptr) return null_argument("experiment");
  if (out == nullptr) return null_argument("out");
  if (!exp->summary) {
    return fail_with(IWP_ERR_INVALID_ARGUMENT, "experiment has not been run");
  }
  const iwp::RunSummary& s = *exp->summary;
  *out = {s.steps, s.final_loss, s.final_accuracy, s.mean_compression_ratio,
          s.mean_density, s.bytes_total};
  g_last_error.clear();
  return IWP_OK;
}

iwp_status iwp_compare_runs(const char* dir_a, const char* dir_b,
                            iwp_comparison** out) {
  if (dir_a == nullptr) return null_argument("dir_a");
  if (dir_b == nullptr) return null_argument("dir_b");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto cmp = std::make_unique<iwp_comparison>();
    cmp->comparison = iwp::compare_runs(dir_a, dir_b);
    std::ostringstream csv;
    iwp::write_comparison_csv(csv, cmp->comparison);
    cmp->csv = csv.str();
    *out = cmp.release();
  });
}

const char* iwp_comparison_csv(const iwp_comparison* cmp) {
  return cmp == nullptr ? "" : cmp->csv.c_str();
}

double iwp_comparison_bytes_ratio(const iwp_comparison* cmp) {
  return cmp == nullptr ? 0.0 : cmp->comparison.bytes_ratio;
}

iwp_status iwp_comparison_write(const iwp_comparison* cmp, const char* dir) {
  if (cmp == nullptr) return null_argument("comparison");
  if (dir == nullptr) return null_argument("dir");
  return guarded([&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = std::filesystem::path(dir) / "comparison.csv";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) iwp::fail(iwp::ErrorKind::kIo, "cannot write " + path.string());
    out << cmp->csv;
  });
}

void iwp_comparison_free(iwp_comparison* cmp) { delete cmp; }

size_t iwp_mask_encoded_size(size_t bit_length) {
  return iwp::encoded_size(bit_length);
}

iwp_status iwp_mask_encode(const uint8_t* bits, size_t bit_length,
                           uint8_t* payload, size_t payload_cap) {
  if (bits == nullptr && bit_length > 0) return null_argument("bits");
  const size_t need = iwp::encoded_size(bit_length);
  if (payload == nullptr && need > 0) return null_argument("payload");
  if (payload_cap < need) {
    return fail_with(IWP_ERR_INVALID_ARGUMENT,
                     "payload buffer needs " + std::to_string(need) + " bytes");
  }
  return guarded([&] {
    const auto mask = iwp::BitMask::from_bits({bits, bit_length});
    const iwp::EncodedMask enc = iwp::encode_mask(mask);
    if (need > 0) std::memcpy(payload, enc.payload.data(), need);
  });
}

iwp_status iwp_mask_decode(const uint8_t* payload, size_t payload_len,
                           size_t bit_length, uint8_t* bits, size_t bits_cap) {
  if (payload == nullptr && payload_len > 0) return null_argument("payload");
  if (bits == nullptr && bit_length > 0) return null_argument("bits");
  if (bits_cap < bit_length) {
    return fail_with(IWP_ERR_INVALID_ARGUMENT,
                     "bits buffer needs " + std::to_string(bit_length) +
                         " bytes");
  }
  return guarded([&] {
    iwp::EncodedMask enc;
    enc.bit_length = bit_length;
    if (payload_len > 0) enc.payload.assign(payload, payload + payload_len);
    const iwp::BitMask mask = iwp::decode_mask(enc);
    for (size_t i = 0; i < bit_length; ++i) bits[i] = mask.test(i) ? 1 : 0;
  });
}

iwp_status iwp_compute_importance(const double* grad, const double* weights,
                                  size_t n, double eps, double* scores) {
  if (n > 0 && (grad == nullptr || weights == nullptr || scores == nullptr)) {
    return null_argument("grad/weights/scores");
  }
  return guarded([&] {
    const iwp::ImportanceVector imp =
        iwp::compute_importance({grad, n}, {weights, n}, eps);
    for (size_t i = 0; i < n; ++i) scores[i] = imp[i];
  });
}

iwp_status iwp_compression_ratio(size_t nnz, size_t mask_bytes,
                                 size_t value_bytes, size_t index_bytes,
                                 size_t dense_bytes, double* out) {
  if (out == nullptr) return null_argument("out");
  return guarded([&] {
    *out = iwp::compression_ratio(nnz, mask_bytes, {value_bytes, index_bytes},
                                  dense_bytes);
  });
}

}  // extern "C"

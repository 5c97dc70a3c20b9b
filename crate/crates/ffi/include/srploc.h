#ifndef SRPLOC_H
#define SRPLOC_H

/* This file is generated by cbindgen from srploc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this API.
typedef enum SrplocStatus {
  SRPLOC_STATUS_OK = 0,
  // A required pointer argument was null.
  SRPLOC_STATUS_NULL_ARGUMENT = 1,
  // A parameter value is out of range or unparsable.
  SRPLOC_STATUS_INVALID_ARGUMENT = 2,
  // Geometry file or microphone layout rejected.
  SRPLOC_STATUS_GEOMETRY_ERROR = 3,
  // Audio file unreadable or incompatible.
  SRPLOC_STATUS_AUDIO_ERROR = 4,
  // Any other failure, including internal panics.
  SRPLOC_STATUS_RUNTIME_ERROR = 5,
} SrplocStatus;

// Opaque localization engine for one geometry and parameter set.
typedef struct SrplocLocator SrplocLocator;

// Search parameters. Zero-initialize and call [`srploc_config_default`]
// first, then override fields as needed.
typedef struct SrplocConfig {
  // Analysis block length in milliseconds.
  uint32_t block_ms;
  // Hop between blocks in milliseconds.
  uint32_t hop_ms;
  // STFT frame length in samples (50% overlap).
  uint32_t n_fft;
  // Processing sample rate in Hz; inputs must already be at this rate for
  // the block API (file loading decimates automatically).
  uint32_t sample_rate;
  // DOA grid resolution in degrees.
  double grid_res_deg;
  // Per-pair AOA axis resolution in degrees.
  double aoa_res_deg;
  // Pairs closer than this (degrees, seen from the array center) are
  // dropped; 0 keeps every pair.
  double min_pair_angle_deg;
  // Speed of sound in m/s.
  double speed_of_sound;
  // Optional band limit in Hz; ignored unless `band_high_hz > band_low_hz`.
  double band_low_hz;
  double band_high_hz;
} SrplocConfig;

// One DOA estimate.
typedef struct SrplocEstimate {
  double time_s;
  double azimuth_deg;
  double elevation_deg;
  // Pooled angular-spectrum value at the peak.
  double score;
} SrplocEstimate;

// Counters reported by [`srploc_locate_file`].
typedef struct SrplocLocateSummary {
  size_t n_mics;
  size_t n_pairs;
  size_t n_blocks;
  size_t n_estimates;
  size_t low_score_blocks;
} SrplocLocateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Fills `config` with the library defaults (512 ms blocks, 256 ms hop,
// 1024-point frames at 16 kHz, 1 degree grid, 5 degree AOA axis, all pairs,
// 343 m/s, no band limit).
//
// # Safety
// `config` must be null or point to writable memory for one `SrplocConfig`.
void srploc_config_default(struct SrplocConfig *config);

// Creates a locator from raw microphone positions: `mic_xyz` holds
// `n_mics * 3` doubles, laid out x0, y0, z0, x1, ...
// `pooling` is an optional spec string like `"sum,sum,max"`; pass null for
// the default. On success writes the handle to `out`.
//
// # Safety
// `mic_xyz` must point to `n_mics * 3` readable doubles; `config` and `out`
// must be valid pointers.
enum SrplocStatus srploc_locator_new(const double *mic_xyz,
                                     size_t n_mics,
                                     const struct SrplocConfig *config,
                                     const char *pooling,
                                     struct SrplocLocator **out);

// Creates a locator from a geometry config file (TOML schema documented in
// the srploc README).
//
// # Safety
// `geometry_path`, `config` and `out` must be valid pointers.
enum SrplocStatus srploc_locator_new_from_file(const char *geometry_path,
                                               const struct SrplocConfig *config,
                                               const char *pooling,
                                               struct SrplocLocator **out);

// Number of microphone channels the locator expects per frame.
//
// # Safety
// `locator` must be null or a live handle from `srploc_locator_new*`.
size_t srploc_locator_channels(const struct SrplocLocator *locator);

// Number of microphone pairs in use (after any curvilinear filtering).
//
// # Safety
// `locator` must be null or a live handle from `srploc_locator_new*`.
size_t srploc_locator_pairs(const struct SrplocLocator *locator);

// Nominal samples per analysis block at the configured sample rate.
//
// # Safety
// `locator` must be null or a live handle from `srploc_locator_new*`.
size_t srploc_locator_block_samples(const struct SrplocLocator *locator);

// Localizes one block of interleaved audio at the configured sample rate.
// `n_frames` must be at least the STFT length; the estimate is stamped
// `start_time_s + n_frames / (2 * sample_rate)`.
//
// # Safety
// `interleaved` must point to `n_frames * srploc_locator_channels()`
// readable doubles; `locator` and `out` must be valid.
enum SrplocStatus srploc_locator_process_block(const struct SrplocLocator *locator,
                                               const double *interleaved,
                                               size_t n_frames,
                                               double start_time_s,
                                               struct SrplocEstimate *out);

// One-shot batch localization: reads a geometry file and a WAV file, writes
// the estimate CSV, optionally reports counters into `summary`.
//
// # Safety
// Path pointers and `config` must be valid; `summary` may be null.
enum SrplocStatus srploc_locate_file(const char *geometry_path,
                                     const char *wav_path,
                                     const char *csv_out_path,
                                     const struct SrplocConfig *config,
                                     const char *pooling,
                                     struct SrplocLocateSummary *summary);

// Releases a locator. Null is a no-op.
//
// # Safety
// `locator` must be a pointer returned by a `srploc_locator_new*` call that
// has not been freed yet.
void srploc_locator_free(struct SrplocLocator *locator);

// Message for the most recent failure on this thread. Valid until the next
// failing call on the same thread; never null.
const char *srploc_last_error_message(void);

// Library version as a static string.
const char *srploc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRPLOC_H */

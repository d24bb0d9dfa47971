/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef IOTGUARD_H
#define IOTGUARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Packet direction relative to the monitored device.
 */
typedef enum IotgDirection {
  IOTG_DIRECTION_OUTBOUND = 0,
  IOTG_DIRECTION_INBOUND = 1,
} IotgDirection;

typedef enum IotgStatus {
  IOTG_STATUS_OK = 0,
  IOTG_STATUS_NULL_POINTER = 1,
  IOTG_STATUS_INVALID_ARGUMENT = 2,
  IOTG_STATUS_IO = 3,
  IOTG_STATUS_PARSE = 4,
  IOTG_STATUS_SCHEMA = 5,
  IOTG_STATUS_CONTRACT = 6,
  IOTG_STATUS_VERSION_MISMATCH = 7,
  IOTG_STATUS_CORRUPT = 8,
  IOTG_STATUS_BUFFER_TOO_SMALL = 9,
  IOTG_STATUS_INTERNAL = 10,
} IotgStatus;

/**
 * Per-packet feature extractor holding its damped-statistic state.
 */
typedef struct IotgExtractor IotgExtractor;

/**
 * Scorer plus majority voter over one stream.
 */
typedef struct IotgMonitor IotgMonitor;

/**
 * Calibrated detector loaded from a profile file.
 */
typedef struct IotgProfile IotgProfile;

/**
 * One captured packet. Addresses are NUL-terminated IPv4 or IPv6 text;
 * a negative port means the protocol has none.
 */
typedef struct IotgPacket {
  double timestamp;
  uint8_t src_mac[6];
  const char *src_ip;
  const char *dst_ip;
  int32_t src_port;
  int32_t dst_port;
  uint32_t size;
  enum IotgDirection direction;
} IotgPacket;

/**
 * Outcome of one monitored instance.
 */
typedef struct IotgStep {
  double mse;
  /**
   * Instance reconstruction error above the profile threshold.
   */
  bool flagged;
  /**
   * Majority verdict over the voting window.
   */
  bool anomalous;
  /**
   * Verdict turned anomalous on this instance.
   */
  bool alert;
  size_t vote_count;
  size_t window_fill;
} IotgStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *iotg_last_error(void);

/**
 * Number of features per instance.
 */
size_t iotg_feature_count(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum IotgStatus iotg_profile_load(const char *path, struct IotgProfile **out);

/**
 * # Safety
 * `profile` must come from [`iotg_profile_load`] and not be freed twice.
 */
void iotg_profile_free(struct IotgProfile *profile);

/**
 * Anomaly threshold, or NaN for a NULL handle.
 *
 * # Safety
 * `profile` must be NULL or a live handle.
 */
double iotg_profile_threshold(const struct IotgProfile *profile);

/**
 * Voting window length, or 0 for a NULL handle.
 *
 * # Safety
 * `profile` must be NULL or a live handle.
 */
size_t iotg_profile_window(const struct IotgProfile *profile);

/**
 * Reconstruction error of one raw feature vector and whether it exceeds
 * the threshold.
 *
 * # Safety
 * `features` must point to `len` readable doubles; `mse` and `flagged` must
 * be writable.
 */
enum IotgStatus iotg_profile_score(const struct IotgProfile *profile,
                                   const double *features,
                                   size_t len,
                                   double *mse,
                                   bool *flagged);

struct IotgExtractor *iotg_extractor_new(void);

/**
 * # Safety
 * `extractor` must come from [`iotg_extractor_new`] and not be freed twice.
 */
void iotg_extractor_free(struct IotgExtractor *extractor);

/**
 * Updates the statistics with one packet and writes its features to `out`,
 * which must hold [`iotg_feature_count`] doubles. Packets must arrive in
 * timestamp order.
 *
 * # Safety
 * `extractor` and `packet` must be live; `out` must point to `out_len`
 * writable doubles.
 */
enum IotgStatus iotg_extractor_push(struct IotgExtractor *extractor,
                                    const struct IotgPacket *packet,
                                    double *out,
                                    size_t out_len);

/**
 * Creates a monitor that owns a copy of the profile; the profile handle may
 * be freed afterwards.
 *
 * # Safety
 * `profile` must be live and `out` writable.
 */
enum IotgStatus iotg_monitor_new(const struct IotgProfile *profile, struct IotgMonitor **out);

/**
 * # Safety
 * `monitor` must come from [`iotg_monitor_new`] and not be freed twice.
 */
void iotg_monitor_free(struct IotgMonitor *monitor);

/**
 * Scores one feature vector and advances the voting window.
 *
 * # Safety
 * `monitor` must be live, `features` must point to `len` readable doubles
 * and `step` must be writable.
 */
enum IotgStatus iotg_monitor_push(struct IotgMonitor *monitor,
                                  const double *features,
                                  size_t len,
                                  struct IotgStep *step);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IOTGUARD_H */

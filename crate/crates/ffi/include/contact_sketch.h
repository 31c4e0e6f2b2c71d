#ifndef CONTACT_SKETCH_H
#define CONTACT_SKETCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_CONFIG = 3,
  CS_STATUS_PARSE = 4,
  CS_STATUS_DATA = 5,
  CS_STATUS_IO = 6,
  CS_STATUS_PANIC = 7,
} CsStatus;

/**
 * Opaque engine handle.
 */
typedef struct CsEngine CsEngine;

/**
 * Opaque snapshot of accumulated trace state.
 */
typedef struct CsTraceResult CsTraceResult;

/**
 * Totals of one ingest call.
 */
typedef struct CsIngestCounts {
  uint64_t streams;
  uint64_t samples;
  uint64_t gaps;
  uint64_t contacts_installed;
  uint64_t edges_created;
  uint64_t edges_expired;
  uint64_t parse_errors;
  uint64_t sample_errors;
} CsIngestCounts;

typedef struct CsTraceEntry {
  uint32_t user;
  uint32_t level;
  uint32_t via;
  uint32_t source;
} CsTraceEntry;

typedef struct CsEdge {
  uint32_t from;
  uint32_t to;
} CsEdge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Creates an engine from a JSON configuration document.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum CsStatus cs_engine_new(const char *config_json, struct CsEngine **out);

/**
 * Loads an engine saved with [`cs_engine_save`].
 *
 * # Safety
 * `dir` must be a NUL-terminated path; `out` must be writable.
 */
enum CsStatus cs_engine_load(const char *dir, struct CsEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from this library and not be used afterwards.
 */
void cs_engine_free(struct CsEngine *engine);

/**
 * Writes the graph snapshot and state sidecar into `dir`.
 *
 * # Safety
 * `engine` must be a live handle; `dir` a NUL-terminated path.
 */
enum CsStatus cs_engine_save(const struct CsEngine *engine, const char *dir);

/**
 * Ingests wire-format streams. Malformed streams are counted in
 * `parse_errors` and do not fail the call.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes (or be null with `len == 0`);
 * `out` may be null.
 */
enum CsStatus cs_engine_ingest(struct CsEngine *engine,
                               const uint8_t *bytes,
                               size_t len,
                               struct CsIngestCounts *out);

/**
 * Frees edges with no contact left in the window.
 *
 * # Safety
 * `engine` must be a live handle; `freed` may be null.
 */
enum CsStatus cs_engine_sweep(struct CsEngine *engine, uint64_t *freed);

/**
 * Traces `count` newly infected users for up to `levels` levels and
 * returns the accumulated trace state.
 *
 * # Safety
 * `infected` must point to `count` user indices; `out` must be writable.
 */
enum CsStatus cs_engine_trace(struct CsEngine *engine,
                              const uint32_t *infected,
                              size_t count,
                              uint32_t levels,
                              struct CsTraceResult **out);

/**
 * Number of suspected users in a trace result (0 for null).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t cs_trace_len(const struct CsTraceResult *result);

/**
 * Copies suspect `index` (ordered by level, then discovery).
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_trace_entry(const struct CsTraceResult *result,
                             size_t index,
                             struct CsTraceEntry *out);

/**
 * Number of infection edges in a trace result (0 for null).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t cs_trace_edge_count(const struct CsTraceResult *result);

/**
 * Copies infection edge `index`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_trace_edge(const struct CsTraceResult *result, size_t index, struct CsEdge *out);

/**
 * Releases a trace result. Null is ignored.
 *
 * # Safety
 * `result` must come from [`cs_engine_trace`] and not be used afterwards.
 */
void cs_trace_free(struct CsTraceResult *result);

/**
 * Trace operator on two `n`-slot vectors given as integers (bit 0 is the
 * latest slot), `1 <= n <= 64`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_sigma(uint64_t c1, uint64_t c2, uint32_t n, bool *out);

/**
 * Sizing-model space estimate in GB (2^33 bits).
 *
 * # Safety
 * `gb` must be writable.
 */
enum CsStatus cs_space_estimate(uint64_t users, uint64_t q, uint64_t n, double *gb);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTACT_SKETCH_H */

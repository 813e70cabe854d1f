#ifndef EVMDIFF_H
#define EVMDIFF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvmdiffStatus {
  EVMDIFF_STATUS_OK = 0,
  EVMDIFF_STATUS_NULL_POINTER = 1,
  EVMDIFF_STATUS_INVALID_UTF8 = 2,
  EVMDIFF_STATUS_INVALID_HEX = 3,
  EVMDIFF_STATUS_INVALID_CONTEXT = 4,
  EVMDIFF_STATUS_UNKNOWN_ENGINE = 5,
  EVMDIFF_STATUS_INVALID_TRACE = 6,
  EVMDIFF_STATUS_COMPARE_FAILED = 7,
  EVMDIFF_STATUS_PANIC = 8,
} EvmdiffStatus;

/**
 * Execution environment.
 */
typedef struct EvmdiffContext EvmdiffContext;

/**
 * Decoded bytecode.
 */
typedef struct EvmdiffProgram EvmdiffProgram;

/**
 * Per-step execution trace plus final state.
 */
typedef struct EvmdiffTrace EvmdiffTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *evmdiff_last_error(void);

/**
 * Library version as a static string.
 */
const char *evmdiff_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void evmdiff_string_free(char *s);

/**
 * Decodes hex (with or without `0x`) into a program.
 *
 * # Safety
 * `hex` must be a NUL-terminated string; `out` must be writable.
 */
enum EvmdiffStatus evmdiff_program_from_hex(const char *hex, struct EvmdiffProgram **out);

/**
 * # Safety
 * `p` must be null or a handle from this library.
 */
void evmdiff_program_free(struct EvmdiffProgram *p);

/**
 * One instruction per line, `MNEMONIC [0ximmediate]`.
 *
 * # Safety
 * `p` must be a live program handle; `out` must be writable.
 */
enum EvmdiffStatus evmdiff_program_disassemble(const struct EvmdiffProgram *p, char **out);

/**
 * The fixed baseline context.
 */
struct EvmdiffContext *evmdiff_context_baseline(void);

/**
 * Context drawn deterministically from `seed`.
 */
struct EvmdiffContext *evmdiff_context_from_seed(uint64_t seed);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum EvmdiffStatus evmdiff_context_from_json(const char *json, struct EvmdiffContext **out);

/**
 * # Safety
 * `c` must be null or a handle from this library.
 */
void evmdiff_context_free(struct EvmdiffContext *c);

/**
 * Runs `program` under `ctx` on the engine named `engine_id`
 * (`reference` or `mutant:F1` .. `mutant:F8`).
 *
 * # Safety
 * All pointers must be live handles or NUL-terminated strings; `out` must
 * be writable.
 */
enum EvmdiffStatus evmdiff_execute(const char *engine_id,
                                   const struct EvmdiffProgram *program,
                                   const struct EvmdiffContext *ctx,
                                   struct EvmdiffTrace **out);

/**
 * Parses a JSON-lines trace.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum EvmdiffStatus evmdiff_trace_from_jsonl(const char *jsonl, struct EvmdiffTrace **out);

/**
 * # Safety
 * `t` must be a live trace handle; `out` must be writable.
 */
enum EvmdiffStatus evmdiff_trace_to_jsonl(const struct EvmdiffTrace *t, char **out);

/**
 * # Safety
 * `t` must be a live trace handle.
 */
size_t evmdiff_trace_steps(const struct EvmdiffTrace *t);

/**
 * # Safety
 * `t` must be a live trace handle.
 */
uint64_t evmdiff_trace_gas_used(const struct EvmdiffTrace *t);

/**
 * # Safety
 * `t` must be null or a handle from this library.
 */
void evmdiff_trace_free(struct EvmdiffTrace *t);

/**
 * Compares `other` against `baseline`. Writes the divergences as a JSON
 * array to `out_json` and their number to `out_count`.
 *
 * # Safety
 * Both traces must be live handles; the out pointers must be writable.
 */
enum EvmdiffStatus evmdiff_compare(const struct EvmdiffTrace *baseline,
                                   const struct EvmdiffTrace *other,
                                   char **out_json,
                                   size_t *out_count);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EVMDIFF_H */

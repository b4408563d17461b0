#ifndef OSCTA_H
#define OSCTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of a call.
 */
typedef enum OsctaStatus {
  OSCTA_STATUS_OK = 0,
  /*
   The program text, policy or JSON could not be parsed.
   */
  OSCTA_STATUS_PARSE_ERROR = 2,
  /*
   An analysis invariant failed.
   */
  OSCTA_STATUS_INTERNAL_ERROR = 3,
  OSCTA_STATUS_NULL_ARGUMENT = 4,
  OSCTA_STATUS_INVALID_UTF8 = 5,
  OSCTA_STATUS_PANIC = 6,
} OsctaStatus;

/*
 Typing mode for While programs.
 */
typedef enum OsctaMode {
  OSCTA_MODE_BASE = 0,
  OSCTA_MODE_CONSTANT_TIME = 1,
} OsctaMode;

/*
 A parsed IR program.
 */
typedef struct OsctaIrProgram OsctaIrProgram;

/*
 A validated While policy.
 */
typedef struct OsctaPolicy OsctaPolicy;

/*
 The outcome of a check.
 */
typedef struct OsctaReport OsctaReport;

/*
 A parsed While program.
 */
typedef struct OsctaWhileProgram OsctaWhileProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Description of the last failure on this thread, or NULL. The pointer
 stays valid until the next call into the library on the same thread.
 */
const char *oscta_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *oscta_version(void);

/*
 Parses a While policy from JSON.

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum OsctaStatus oscta_policy_from_json(const char *json, struct OsctaPolicy **out);

/*
 # Safety
 `p` must come from [`oscta_policy_from_json`] and not be used afterwards.
 */
void oscta_policy_free(struct OsctaPolicy *p);

/*
 Parses a While program whose names must be declared by `policy`.

 # Safety
 Pointers must be valid; `src` NUL-terminated.
 */
enum OsctaStatus oscta_while_parse(const char *src,
                                   const struct OsctaPolicy *policy,
                                   struct OsctaWhileProgram **out);

/*
 # Safety
 `p` must come from [`oscta_while_parse`] and not be used afterwards.
 */
void oscta_while_free(struct OsctaWhileProgram *p);

/*
 Parses an IR program.

 # Safety
 Pointers must be valid; `src` NUL-terminated.
 */
enum OsctaStatus oscta_ir_parse(const char *src, struct OsctaIrProgram **out);

/*
 # Safety
 `p` must come from [`oscta_ir_parse`] and not be used afterwards.
 */
void oscta_ir_free(struct OsctaIrProgram *p);

/*
 Types a While program. A rejection is still `Ok`; read the verdict
 from the report.

 # Safety
 Pointers must be valid.
 */
enum OsctaStatus oscta_check_while(const struct OsctaWhileProgram *prog,
                                   const struct OsctaPolicy *policy,
                                   enum OsctaMode mode,
                                   struct OsctaReport **out);

/*
 Types an IR program against a policy given as JSON.

 # Safety
 Pointers must be valid; `policy_json` NUL-terminated.
 */
enum OsctaStatus oscta_check_ir(const struct OsctaIrProgram *prog,
                                const char *policy_json,
                                struct OsctaReport **out);

/*
 1 when the program was accepted, 0 when not, -1 for a null handle.

 # Safety
 `r` must be NULL or a live report.
 */
int32_t oscta_report_accepted(const struct OsctaReport *r);

/*
 The report as JSON; release with [`oscta_string_free`]. NULL for a null
 handle.

 # Safety
 `r` must be NULL or a live report.
 */
char *oscta_report_json(const struct OsctaReport *r);

/*
 # Safety
 `r` must come from a check function and not be used afterwards.
 */
void oscta_report_free(struct OsctaReport *r);

/*
 Writes the instrumented program text to `out`; release it with
 [`oscta_string_free`].

 # Safety
 Pointers must be valid.
 */
enum OsctaStatus oscta_instrument(const struct OsctaWhileProgram *prog, char **out);

/*
 # Safety
 `s` must be NULL or a string returned by this library.
 */
void oscta_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSCTA_H */

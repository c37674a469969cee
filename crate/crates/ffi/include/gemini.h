#ifndef GEMINI_H
#define GEMINI_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GmStatus {
  GM_STATUS_OK = 0,
  GM_STATUS_NULL_POINTER = 1,
  GM_STATUS_INVALID_UTF8 = 2,
  GM_STATUS_INVALID_ARGUMENT = 3,
  GM_STATUS_SCHEME_INVALID = 4,
  GM_STATUS_DECODE_ERROR = 5,
  GM_STATUS_STALE_FRAME = 6,
  GM_STATUS_ILLEGAL_TRANSITION = 7,
  GM_STATUS_INFERENCE_FAILED = 8,
  /**
   * No event is pending.
   */
  GM_STATUS_EMPTY = 9,
  GM_STATUS_INTERNAL = 10,
  GM_STATUS_PANIC = 99,
} GmStatus;

typedef enum GmEventKind {
  GM_EVENT_KIND_KEY_DOWN = 0,
  GM_EVENT_KIND_KEY_UP = 1,
  GM_EVENT_KIND_MOUSE_DELTA = 2,
  GM_EVENT_KIND_MOUSE_DOWN = 3,
  GM_EVENT_KIND_MOUSE_UP = 4,
} GmEventKind;

/**
 * Opaque engine session.
 */
typedef struct GmSession GmSession;

/**
 * One synthesized output event. `code` is a key code for key events (see
 * [`gm_key_name`]) and 0/1/2 for left/right/middle mouse buttons.
 */
typedef struct GmEvent {
  uint64_t timestamp_ms;
  enum GmEventKind kind;
  uint32_t code;
  int64_t dx;
  int64_t dy;
} GmEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call on the same thread.
 */
const char *gm_last_error(void);

/**
 * Library version string (static).
 */
const char *gm_version(void);

/**
 * Name of a key code (`"w"`, `"enter"`, ...), or NULL if unknown. Static.
 */
const char *gm_key_name(uint32_t code);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from an `out` string parameter of this library and must not
 * be freed twice.
 */
void gm_string_free(char *s);

/**
 * Creates a session from a scheme document. On `GmStatus::SchemeInvalid`
 * the last error holds the JSON array of validation errors.
 *
 * # Safety
 * `scheme_json` must be a NUL-terminated string; `out` must be writable.
 */
enum GmStatus gm_session_new(const char *scheme_json, struct GmSession **out);

/**
 * Destroys a session. NULL is ignored.
 *
 * # Safety
 * `s` must come from [`gm_session_new`] and must not be used afterwards.
 */
void gm_session_free(struct GmSession *s);

/**
 * Pushes one skeleton frame: `coords` holds 20 joints × (x, y, z) in
 * canonical joint order (head, shoulder_center, ...).
 *
 * # Safety
 * `s` must be a live session; `coords` must point to `len` doubles.
 */
enum GmStatus gm_session_push_frame(struct GmSession *s,
                                    uint64_t timestamp_ms,
                                    const double *coords,
                                    size_t len);

/**
 * Pushes one skeleton record in stream format (`{"t":..,"joints":{..}}`).
 *
 * # Safety
 * `s` must be a live session; `record` a NUL-terminated string.
 */
enum GmStatus gm_session_push_frame_json(struct GmSession *s, const char *record);

/**
 * Pushes one transcript word.
 *
 * # Safety
 * `s` must be a live session; `word` a NUL-terminated string.
 */
enum GmStatus gm_session_push_token(struct GmSession *s, uint64_t timestamp_ms, const char *word);

/**
 * Pushes a device button transition.
 *
 * # Safety
 * `s` must be a live session; `device` and `button` NUL-terminated strings.
 */
enum GmStatus gm_session_push_button(struct GmSession *s,
                                     uint64_t timestamp_ms,
                                     const char *device,
                                     const char *button,
                                     bool down);

/**
 * Pushes an analog stick position; components are clamped to [-1, 1].
 *
 * # Safety
 * `s` must be a live session; `device` a NUL-terminated string.
 */
enum GmStatus gm_session_push_analog(struct GmSession *s,
                                     uint64_t timestamp_ms,
                                     const char *device,
                                     double x,
                                     double y);

/**
 * Advances virtual time, emitting due key repeats and mouse motion.
 *
 * # Safety
 * `s` must be a live session.
 */
enum GmStatus gm_session_tick(struct GmSession *s, uint64_t now_ms);

/**
 * Ends input: flushes pending phrases and releases every hold.
 *
 * # Safety
 * `s` must be a live session.
 */
enum GmStatus gm_session_finish(struct GmSession *s);

/**
 * Number of output events waiting in the queue.
 *
 * # Safety
 * `s` must be a live session or NULL.
 */
size_t gm_session_pending(const struct GmSession *s);

/**
 * Pops the oldest output event into `out`; `GmStatus::Empty` when none.
 *
 * # Safety
 * `s` must be a live session; `out` must be writable.
 */
enum GmStatus gm_session_next_event(struct GmSession *s, struct GmEvent *out);

/**
 * Resumes a paused session.
 *
 * # Safety
 * `s` must be a live session.
 */
enum GmStatus gm_session_start(struct GmSession *s);

/**
 * Pauses the session, releasing all holds.
 *
 * # Safety
 * `s` must be a live session.
 */
enum GmStatus gm_session_stop(struct GmSession *s);

/**
 * Starts buffering frames for a new pose.
 *
 * # Safety
 * `s` must be a live session; `pose_id` a NUL-terminated string.
 */
enum GmStatus gm_session_start_recording(struct GmSession *s, const char *pose_id);

/**
 * Infers the recorded pose and adds it to the scheme. On success `out`
 * receives the pose definition as JSON.
 *
 * # Safety
 * `s` must be a live session; `out` must be writable.
 */
enum GmStatus gm_session_finish_recording(struct GmSession *s, char **out);

/**
 * The session's current scheme in canonical form.
 *
 * # Safety
 * `s` must be a live session; `out` must be writable.
 */
enum GmStatus gm_session_scheme_json(const struct GmSession *s, char **out);

/**
 * Validates a scheme document. `out_errors` (optional) receives a JSON
 * array with every error, empty when valid.
 *
 * # Safety
 * `scheme_json` must be a NUL-terminated string; `out_errors` NULL or
 * writable.
 */
enum GmStatus gm_scheme_validate(const char *scheme_json, char **out_errors);

/**
 * Infers a pose from a `.skel.jsonl` recording with default settings.
 *
 * # Safety
 * `recording` and `pose_id` must be NUL-terminated strings; `out` writable.
 */
enum GmStatus gm_infer_jsonl(const char *recording, const char *pose_id, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEMINI_H */

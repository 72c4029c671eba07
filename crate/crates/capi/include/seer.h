/* C interface for the seer song recommender. */

#ifndef SEER_H
#define SEER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every API call.
typedef enum SeerStatus {
  SEER_STATUS_OK = 0,
  // A required pointer argument was null.
  SEER_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SEER_STATUS_INVALID_UTF8 = 2,
  // The data directory or checkpoint could not be read or parsed.
  SEER_STATUS_LOAD_FAILED = 3,
  // Unknown user or song id.
  SEER_STATUS_NOT_FOUND = 4,
  // The operation is not supported by this model kind.
  SEER_STATUS_UNSUPPORTED = 5,
  // Anything else; see `seer_last_error_message`.
  SEER_STATUS_INTERNAL = 6,
} SeerStatus;

// Opaque session handle: prepared corpus plus a trained model.
typedef struct SeerSession SeerSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The last error message for this thread. The pointer stays valid until
// the next failing call on the same thread. Never null.
const char *seer_last_error_message(void);

// Library version as a static string.
const char *seer_version(void);

// Open a session over a prepared data directory and a checkpoint produced
// by `seer train`. On success writes the handle to `out_session`; release
// it with `seer_session_close`.
//
// # Safety
// `data_dir` and `checkpoint` must be NUL-terminated strings;
// `out_session` must be a valid pointer.
enum SeerStatus seer_session_open(const char *data_dir,
                                  const char *checkpoint,
                                  struct SeerSession **out_session);

// Release a session. Null is ignored.
//
// # Safety
// `session` must be a pointer returned by `seer_session_open` that has not
// been closed yet.
void seer_session_close(struct SeerSession *session);

// Number of users / songs in the session's corpus.
//
// # Safety
// `session` must be a live session handle; out-pointers may be null to skip.
enum SeerStatus seer_session_counts(const struct SeerSession *session,
                                    size_t *out_users,
                                    size_t *out_songs);

// Predicted rating for a (user id, song id) pair.
//
// # Safety
// String arguments must be NUL-terminated; `out_rating` must be valid.
enum SeerStatus seer_session_predict(const struct SeerSession *session,
                                     const char *user_id,
                                     const char *song_id,
                                     float *out_rating);

// Top-K recommendations for a user as a heap CSV string with
// `song_id,score` lines, scores descending. Free with `seer_string_free`.
//
// # Safety
// `user_id` must be NUL-terminated; `out_csv` must be valid.
enum SeerStatus seer_session_recommend(const struct SeerSession *session,
                                       const char *user_id,
                                       size_t k,
                                       bool include_rated,
                                       char **out_csv);

// Explain a (user, song) pair: writes the winning 10-second segment as a
// MIDI file plus a metadata CSV line, and reports its bounds and rating.
//
// # Safety
// String arguments must be NUL-terminated; out-pointers may be null to skip.
enum SeerStatus seer_session_explain(const struct SeerSession *session,
                                     const char *user_id,
                                     const char *song_id,
                                     const char *out_midi_path,
                                     const char *out_meta_path,
                                     uint64_t *out_start_us,
                                     uint64_t *out_end_us,
                                     float *out_rating);

// Free a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be a pointer previously returned through an out-parameter of
// this library and not yet freed.
void seer_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEER_H */

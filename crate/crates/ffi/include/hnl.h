#ifndef HNL_H
#define HNL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every entry point.
typedef enum HnlStatus {
  HNL_STATUS_OK = 0,
  HNL_STATUS_NULL_POINTER = 1,
  HNL_STATUS_INVALID_ARGUMENT = 2,
  HNL_STATUS_DECODE = 3,
  HNL_STATUS_ENCODE = 4,
  HNL_STATUS_IO = 5,
  HNL_STATUS_PARSE = 6,
  HNL_STATUS_ANALYSIS = 7,
  HNL_STATUS_BUFFER_TOO_SMALL = 8,
  HNL_STATUS_INCOMPLETE = 9,
  HNL_STATUS_PANIC = 10,
} HnlStatus;

typedef enum HnlStrategy {
  HNL_STRATEGY_NO_CONTENT = 0,
  HNL_STRATEGY_RANDOM_CONTENT = 1,
} HnlStrategy;

// Salted IP hasher.
typedef struct HnlHasher HnlHasher;

// A honeypot driven frame by frame; the caller owns the sockets.
typedef struct HnlHoneypot HnlHoneypot;

// A loaded unified log.
typedef struct HnlLog HnlLog;

// A decoded wire message.
typedef struct HnlMessage HnlMessage;

typedef struct HnlSummary {
  uint64_t n_honeypots;
  uint64_t duration_days;
  uint64_t n_shared_files;
  uint64_t n_distinct_peers;
  uint64_t n_distinct_files;
  uint64_t total_distinct_file_bytes;
} HnlSummary;

typedef struct HnlSubsetPoint {
  uint64_t n;
  double avg;
  double min;
  double max;
  // Non-zero when every subset was enumerated.
  uint8_t exhaustive;
} HnlSubsetPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *hnl_status_str(enum HnlStatus status);

// Copies the calling thread's last error message (NUL-terminated,
// truncated to `cap`) and returns its full length without the NUL.
//
// # Safety
// `buf` must be valid for `cap` bytes or null.
size_t hnl_last_error(char *buf, size_t cap);

// Size of the complete frame at the start of `buf`; `HNL_STATUS_INCOMPLETE`
// when more bytes are needed.
//
// # Safety
// `buf` must be valid for `len` bytes; `frame_len` must be writable.
enum HnlStatus hnl_frame_length(const uint8_t *buf, size_t len, size_t *frame_len);

// Decodes exactly one frame.
//
// # Safety
// `buf` must be valid for `len` bytes; `out` must be writable.
enum HnlStatus hnl_message_decode(const uint8_t *buf, size_t len, struct HnlMessage **out);

// A StartUpload message for a 16-byte file id.
//
// # Safety
// `file_id` must point at 16 bytes; `out` must be writable.
enum HnlStatus hnl_message_start_upload(const uint8_t *file_id, struct HnlMessage **out);

// A RequestPart message for one byte range.
//
// # Safety
// `file_id` must point at 16 bytes; `out` must be writable.
enum HnlStatus hnl_message_request_part(const uint8_t *file_id,
                                        uint64_t offset,
                                        uint32_t length,
                                        struct HnlMessage **out);

// The message's opcode byte.
//
// # Safety
// `msg` must be a live message handle; `opcode` must be writable.
enum HnlStatus hnl_message_opcode(const struct HnlMessage *msg, uint8_t *opcode);

// Encodes `msg` into `out`.
//
// # Safety
// `msg` must be a live handle; `out` valid for `cap` bytes; `written` writable.
enum HnlStatus hnl_message_encode(const struct HnlMessage *msg,
                                  uint8_t *out,
                                  size_t cap,
                                  size_t *written);

// # Safety
// `msg` must come from this library and not be used afterwards.
void hnl_message_free(struct HnlMessage *msg);

// A hasher keyed by a 32-byte campaign salt.
//
// # Safety
// `salt` must point at 32 bytes; `out` must be writable.
enum HnlStatus hnl_hasher_new(const uint8_t *salt, struct HnlHasher **out);

// Hashes an IPv4 address given as a host-order integer (`a.b.c.d` is
// `a << 24 | b << 16 | c << 8 | d`) into 32 bytes.
//
// # Safety
// `hasher` must be live; `digest` must be writable for 32 bytes.
enum HnlStatus hnl_hasher_hash_ip(const struct HnlHasher *hasher, uint32_t ip, uint8_t *digest);

// # Safety
// `hasher` must come from this library and not be used afterwards.
void hnl_hasher_free(struct HnlHasher *hasher);

// A disconnected honeypot. `salt` may be null for an all-zero salt.
//
// # Safety
// `id` must be a NUL-terminated string; `salt` null or 32 bytes; `out` writable.
enum HnlStatus hnl_honeypot_new(const char *id,
                                enum HnlStrategy strategy,
                                const uint8_t *salt,
                                uint64_t started_ms,
                                struct HnlHoneypot **out);

// Adds a file to the shared list.
//
// # Safety
// `hp` must be live; `file_id` 16 bytes; `name` NUL-terminated.
enum HnlStatus hnl_honeypot_share(struct HnlHoneypot *hp,
                                  const uint8_t *file_id,
                                  const char *name,
                                  uint64_t size,
                                  uint64_t now_ms);

// Handles one frame received on connection `conn` from `ip:port` (`ip` as
// in [`hnl_hasher_hash_ip`]). Replies are queued for
// [`hnl_honeypot_take_replies`]; log lines for [`hnl_honeypot_take_log`].
//
// # Safety
// `hp` must be live; `frame` valid for `len` bytes.
enum HnlStatus hnl_honeypot_feed(struct HnlHoneypot *hp,
                                 uint64_t conn,
                                 uint32_t ip,
                                 uint16_t port,
                                 const uint8_t *frame,
                                 size_t len,
                                 uint64_t now_ms);

// Forgets connection `conn`.
//
// # Safety
// `hp` must be live.
enum HnlStatus hnl_honeypot_close(struct HnlHoneypot *hp, uint64_t conn);

// Moves the queued reply frames (concatenated) into `out`.
//
// # Safety
// `hp` must be live; `out` valid for `cap` bytes; `written` writable.
enum HnlStatus hnl_honeypot_take_replies(struct HnlHoneypot *hp,
                                         uint8_t *out,
                                         size_t cap,
                                         size_t *written);

// Moves the log text written so far (header included on first call) into
// `out`. Not NUL-terminated.
//
// # Safety
// `hp` must be live; `out` valid for `cap` bytes; `written` writable.
enum HnlStatus hnl_honeypot_take_log(struct HnlHoneypot *hp,
                                     uint8_t *out,
                                     size_t cap,
                                     size_t *written);

// Like [`hnl_honeypot_take_log`] for retrieved shared-list records.
//
// # Safety
// As for [`hnl_honeypot_take_log`].
enum HnlStatus hnl_honeypot_take_shares(struct HnlHoneypot *hp,
                                        uint8_t *out,
                                        size_t cap,
                                        size_t *written);

// # Safety
// `hp` must come from this library and not be used afterwards.
void hnl_honeypot_free(struct HnlHoneypot *hp);

// Loads a unified log file (and its sibling `.shares`, if any).
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum HnlStatus hnl_log_load(const char *path, struct HnlLog **out);

// Parses unified log text; `shares` may be null.
//
// # Safety
// `log` NUL-terminated; `shares` null or NUL-terminated; `out` writable.
enum HnlStatus hnl_log_from_text(const char *log, const char *shares, struct HnlLog **out);

// Number of records.
//
// # Safety
// `log` must be live; `n` writable.
enum HnlStatus hnl_log_len(const struct HnlLog *log, uint64_t *n);

// # Safety
// `log` must be live; `out` writable.
enum HnlStatus hnl_log_summary(const struct HnlLog *log, struct HnlSummary *out);

// Distinct peers seen by subsets of `n` honeypots.
//
// # Safety
// `log` must be live; `out` writable.
enum HnlStatus hnl_log_honeypot_subsets(const struct HnlLog *log,
                                        uint64_t n,
                                        uint64_t trials,
                                        uint64_t seed,
                                        struct HnlSubsetPoint *out);

// # Safety
// `log` must come from this library and not be used afterwards.
void hnl_log_free(struct HnlLog *log);

// Runs a simulation and writes its outputs under `out_dir`. `config` may
// be null for defaults; both texts use the file formats of the CLI.
//
// # Safety
// Strings must be NUL-terminated (or null where allowed).
enum HnlStatus hnl_run_sim(const char *config, const char *plan, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HNL_H */

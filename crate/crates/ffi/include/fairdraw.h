#ifndef FAIRDRAW_H
#define FAIRDRAW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  FD_STATUS_OK = 0,
  FD_STATUS_NULL_ARGUMENT = 1,
  FD_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON, key bytes or drawing definition.
   */
  FD_STATUS_INVALID_INPUT = 3,
  /**
   * The protocol refused the operation, e.g. a key that is not a
   * stakeholder.
   */
  FD_STATUS_PROTOCOL = 4,
  /**
   * Reveal requested before every commitment was verified.
   */
  FD_STATUS_REVEAL_GATED = 5,
  FD_STATUS_PANIC = 6,
} FdStatus;

/**
 * What happened to a delivered message.
 */
typedef enum {
  FD_DELIVERY_RECORDED = 0,
  FD_DELIVERY_DUPLICATE = 1,
  /**
   * The message proved misbehavior; the session is now Aborted.
   */
  FD_DELIVERY_ABORTED = 2,
  /**
   * Refused and logged as an incident; the session state is unchanged.
   */
  FD_DELIVERY_REJECTED = 3,
} FdDelivery;

typedef enum {
  FD_PHASE_SETUP = 0,
  FD_PHASE_COMMITTING = 1,
  FD_PHASE_REVEALING = 2,
  FD_PHASE_COMPLETE = 3,
  FD_PHASE_ABORTED = 4,
} FdPhase;

/**
 * Audit verdicts; the values match the CLI exit codes.
 */
typedef enum {
  FD_VERDICT_FAIR = 0,
  FD_VERDICT_MANIPULATED = 2,
  FD_VERDICT_INCOMPLETE = 3,
} FdVerdict;

typedef struct FdKeyPair FdKeyPair;

typedef struct FdParticipant FdParticipant;

typedef struct FdSetup FdSetup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. Valid until the
 * next call into this library from the same thread; do not free.
 */
const char *fd_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fd_string_free(char *s);

/**
 * Fresh key pair from the operating system RNG.
 *
 * # Safety
 * `out` must be valid for writes.
 */
FdStatus fd_keypair_generate(FdKeyPair **out);

/**
 * Key pair from a 32-byte secret.
 *
 * # Safety
 * `secret` must point to `len` readable bytes; `out` must be valid for writes.
 */
FdStatus fd_keypair_from_secret(const uint8_t *secret, size_t len, FdKeyPair **out);

/**
 * Writes the 32-byte Ed25519 public key to `out32`.
 *
 * # Safety
 * `kp` must be a live handle; `out32` must be valid for 32 bytes of writes.
 */
FdStatus fd_keypair_public_key(const FdKeyPair *kp, uint8_t *out32);

/**
 * Hex SHA-256 fingerprint of the public key.
 *
 * # Safety
 * `kp` must be a live handle; `out` must be valid for writes.
 */
FdStatus fd_keypair_fingerprint(const FdKeyPair *kp, char **out);

/**
 * # Safety
 * `kp` must be NULL or a handle from this library, freed at most once.
 */
void fd_keypair_free(FdKeyPair *kp);

/**
 * Session setup from an operator spec file (stakeholders, mode, draws).
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be valid for writes.
 */
FdStatus fd_setup_from_spec(const char *spec_json, FdSetup **out);

/**
 * Session setup from its relay JSON form (`{"session", "keys"}`).
 *
 * # Safety
 * `setup_json` must be a NUL-terminated string; `out` must be valid for writes.
 */
FdStatus fd_setup_from_json(const char *setup_json, FdSetup **out);

/**
 * Relay JSON form of the setup, as posted to `POST /sessions`.
 *
 * # Safety
 * `setup` must be a live handle; `out` must be valid for writes.
 */
FdStatus fd_setup_to_json(const FdSetup *setup, char **out);

/**
 * Relay session id for the setup.
 *
 * # Safety
 * `setup` must be a live handle; `out` must be valid for writes.
 */
FdStatus fd_setup_session_id(const FdSetup *setup, char **out);

/**
 * # Safety
 * `setup` must be NULL or a handle from this library, freed at most once.
 */
void fd_setup_free(FdSetup *setup);

/**
 * Draws a fresh mask and shares, commits and signs. `out_commit_json`
 * receives the commit message to post.
 *
 * # Safety
 * Handles must be live; out pointers must be valid for writes.
 */
FdStatus fd_participant_start(const FdSetup *setup,
                              const FdKeyPair *kp,
                              FdParticipant **out,
                              char **out_commit_json);

/**
 * Delivers one message (JSON, `"type": "commit" | "reveal"`).
 *
 * # Safety
 * `p` must be a live handle; `message_json` a NUL-terminated string;
 * `out_delivery` valid for writes.
 */
FdStatus fd_participant_receive(FdParticipant *p,
                                const char *message_json,
                                FdDelivery *out_delivery);

/**
 * # Safety
 * `p` must be a live handle; `out` valid for writes.
 */
FdStatus fd_participant_phase(const FdParticipant *p, FdPhase *out);

/**
 * The reveal message, available only once every commitment is verified;
 * otherwise returns `RevealGated` and writes nothing.
 *
 * # Safety
 * `p` must be a live handle; `out_json` valid for writes.
 */
FdStatus fd_participant_reveal(const FdParticipant *p, char **out_json);

/**
 * Session status JSON: phase, per-stakeholder progress, outcome, abort.
 *
 * # Safety
 * `p` must be a live handle; `out_json` valid for writes.
 */
FdStatus fd_participant_status(const FdParticipant *p, char **out_json);

/**
 * Aborts the session for a passed phase deadline, naming silent
 * stakeholders. No effect outside Committing and Revealing.
 *
 * # Safety
 * `p` must be a live handle.
 */
FdStatus fd_participant_timeout(FdParticipant *p);

/**
 * # Safety
 * `p` must be NULL or a handle from this library, freed at most once.
 */
void fd_participant_free(FdParticipant *p);

/**
 * Audits a `transcriptv1` document. Writes the report JSON and verdict.
 * Unparseable transcripts return `InvalidInput` with the byte offset in
 * the error message.
 *
 * # Safety
 * `transcript_json` must be a NUL-terminated string; out pointers valid
 * for writes.
 */
FdStatus fd_audit_transcript(const char *transcript_json,
                             char **out_report_json,
                             FdVerdict *out_verdict);

/**
 * Library version, static; do not free.
 */
const char *fd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRDRAW_H */

#ifndef ROLEGATE_H
#define ROLEGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_ARGUMENT = 1,
  RG_STATUS_INVALID_UTF8 = 2,
  RG_STATUS_INVALID_ARGUMENT = 3,
  RG_STATUS_CRYPTO = 4,
  RG_STATUS_CATALOG = 5,
  RG_STATUS_AUTHENTICATION = 6,
  RG_STATUS_GATEWAY = 7,
  RG_STATUS_PANIC = 99,
} RgStatus;

/**
 * Opaque logged-in client bound to a gateway.
 */
typedef struct RgClient RgClient;

/**
 * Opaque gateway.
 */
typedef struct RgGateway RgGateway;

/**
 * Opaque Paillier key pair.
 */
typedef struct RgPaillierKeyPair RgPaillierKeyPair;

/**
 * Heap bytes handed to the caller.
 */
typedef struct RgBuffer {
  uint8_t *data;
  size_t len;
} RgBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *rg_last_error_message(void);

/**
 * Releases a buffer returned by this library. Passing an empty buffer is a no-op.
 *
 * # Safety
 * `buf` must come from this library and must not be freed twice.
 */
void rg_buffer_free(struct RgBuffer buf);

/**
 * Generates a Paillier key pair with `g = n + 1`. A `seed` of 0 draws
 * from system entropy; any other value is deterministic.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum RgStatus rg_paillier_generate(uint64_t bits, uint64_t seed, struct RgPaillierKeyPair **out);

/**
 * # Safety
 * `kp` must be NULL or a handle from [`rg_paillier_generate`], freed once.
 */
void rg_paillier_free(struct RgPaillierKeyPair *kp);

/**
 * Encrypts a signed integer; writes the serialized ciphertext to `out`.
 *
 * # Safety
 * `kp` must be a live handle and `out` writable.
 */
enum RgStatus rg_paillier_encrypt_i64(const struct RgPaillierKeyPair *kp,
                                      int64_t value,
                                      struct RgBuffer *out);

/**
 * Decrypts a ciphertext produced by [`rg_paillier_encrypt_i64`] or
 * [`rg_paillier_add`].
 *
 * # Safety
 * `kp` must be a live handle, `data` must point to `len` readable bytes
 * and `out` must be writable.
 */
enum RgStatus rg_paillier_decrypt_i64(const struct RgPaillierKeyPair *kp,
                                      const uint8_t *data,
                                      size_t len,
                                      int64_t *out);

/**
 * Homomorphic addition of two ciphertexts under the same key.
 *
 * # Safety
 * `kp` must be a live handle, `a`/`b` must point to `a_len`/`b_len`
 * readable bytes and `out` must be writable.
 */
enum RgStatus rg_paillier_add(const struct RgPaillierKeyPair *kp,
                              const uint8_t *a,
                              size_t a_len,
                              const uint8_t *b,
                              size_t b_len,
                              struct RgBuffer *out);

/**
 * Canonical bytes of the decryption key, as released by the gateway.
 *
 * # Safety
 * `kp` must be a live handle and `out` writable.
 */
enum RgStatus rg_paillier_decryption_key(const struct RgPaillierKeyPair *kp, struct RgBuffer *out);

/**
 * Opens (or creates) a persistent catalog directory and starts an
 * in-process gateway over it.
 *
 * # Safety
 * `data_dir` must be a NUL-terminated string and `out` writable.
 */
enum RgStatus rg_gateway_open(const char *data_dir, struct RgGateway **out);

/**
 * Starts an in-memory gateway loaded with the built-in demonstration
 * fixture (tenants `acme` and `globex`).
 *
 * # Safety
 * `out` must be writable.
 */
enum RgStatus rg_gateway_demo(uint64_t key_bits, uint64_t seed, struct RgGateway **out);

/**
 * # Safety
 * `gw` must be NULL or a gateway handle, freed once. Clients created from
 * it stay valid.
 */
void rg_gateway_free(struct RgGateway *gw);

/**
 * Authenticates a user and returns a client handle.
 *
 * # Safety
 * `gw` must be a live handle, the strings NUL-terminated and `out` writable.
 */
enum RgStatus rg_client_login(const struct RgGateway *gw,
                              const char *tenant,
                              const char *user,
                              const char *password,
                              struct RgClient **out);

/**
 * Attaches a group key (`<group id>:<hex>`) to subsequent queries; NULL
 * clears it.
 *
 * # Safety
 * `client` must be a live handle and `key` NULL or NUL-terminated.
 */
enum RgStatus rg_client_set_group_key(struct RgClient *client, const char *key);

/**
 * Runs one query through the full pipeline. On `RG_STATUS_OK` the buffer
 * holds the JSON result payload (`outcome`, `result` and, when sensitive
 * access was granted, `decryption_key`). A denied query is still
 * `RG_STATUS_OK`; inspect `outcome`.
 *
 * # Safety
 * `client` must be a live handle, `sql` NUL-terminated and `out` writable.
 */
enum RgStatus rg_client_query(struct RgClient *client,
                              const char *sql,
                              bool sensitive,
                              struct RgBuffer *out);

/**
 * # Safety
 * `client` must be NULL or a client handle, freed once.
 */
void rg_client_free(struct RgClient *client);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROLEGATE_H */

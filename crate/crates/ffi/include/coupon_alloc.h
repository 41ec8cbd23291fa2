#ifndef COUPON_ALLOC_H
#define COUPON_ALLOC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_POINTER = 1,
  CA_STATUS_INVALID_ARGUMENT = 2,
  CA_STATUS_IO = 3,
  CA_STATUS_PARSE = 4,
  CA_STATUS_BUDGET_BREACH = 5,
  CA_STATUS_NON_FINITE = 6,
  CA_STATUS_UNSUPPORTED = 7,
  CA_STATUS_BUFFER_TOO_SMALL = 8,
  CA_STATUS_PANIC = 9,
} CaStatus;

/**
 * An online allocator with its budget ledger.
 */
typedef struct CaAllocator CaAllocator;

/**
 * A loaded scoring model.
 */
typedef struct CaModel CaModel;

/**
 * One behavior event.
 */
typedef struct CaEvent {
  uint16_t action;
  /**
   * Dwell time in seconds.
   */
  double dwell;
  uint32_t step;
} CaEvent;

/**
 * Scores for one amount; `amount_cents` 0 is the null coupon.
 */
typedef struct CaMenuScore {
  int64_t amount_cents;
  double p_stay;
  double p_pay;
} CaMenuScore;

/**
 * One allocation decision.
 */
typedef struct CaDecision {
  uint64_t user_id;
  /**
   * 1 when the user was excluded by the staying threshold.
   */
  uint8_t gated;
  /**
   * Menu index chosen (0 = no coupon).
   */
  uint32_t index;
  int64_t amount_cents;
  int64_t spent_after_cents;
} CaDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *ca_last_error(void);

/**
 * Loads a model file written by `coupon-alloc train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CaStatus ca_model_load(const char *path, struct CaModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`ca_model_load`] not yet freed.
 */
void ca_model_free(struct CaModel *model);

/**
 * Scores `{0} ∪ menu` for one session and static profile.
 *
 * Writes up to `out_cap` scores and the full count to `out_len`; returns
 * `BufferTooSmall` when `out_cap` is short.
 *
 * # Safety
 * Array pointers must be valid for their lengths; `out_len` must be writable.
 */
enum CaStatus ca_model_score_menu(const struct CaModel *model,
                                  const struct CaEvent *events,
                                  size_t n_events,
                                  const uint16_t *statics,
                                  size_t n_statics,
                                  const int64_t *menu_cents,
                                  size_t n_menu,
                                  struct CaMenuScore *out,
                                  size_t out_cap,
                                  size_t *out_len);

/**
 * Budget price for a sample of `n_users` menus of `menu_len` scores each (row-major).
 *
 * # Safety
 * `scores` must hold `n_users * menu_len` values; `out_alpha` must be writable.
 */
enum CaStatus ca_estimate_dual(const struct CaMenuScore *scores,
                               size_t menu_len,
                               size_t n_users,
                               int64_t budget_cents,
                               double gamma,
                               double *out_alpha);

/**
 * Creates an allocator with price `alpha`, a budget and a staying threshold.
 *
 * # Safety
 * `out` must be writable.
 */
enum CaStatus ca_allocator_new(double alpha,
                               int64_t budget_cents,
                               double gamma,
                               struct CaAllocator **out);

/**
 * Decides one arriving user irrevocably.
 *
 * # Safety
 * `alloc` must be a live handle; `scores` must hold `menu_len` values; `out` must be writable.
 */
enum CaStatus ca_allocator_decide(struct CaAllocator *alloc,
                                  uint64_t user_id,
                                  const struct CaMenuScore *scores,
                                  size_t menu_len,
                                  struct CaDecision *out);

/**
 * Total spent so far, in cents.
 *
 * # Safety
 * `alloc` must be a live handle; `out_cents` must be writable.
 */
enum CaStatus ca_allocator_spent(const struct CaAllocator *alloc, int64_t *out_cents);

/**
 * # Safety
 * `alloc` must be null or a handle from [`ca_allocator_new`] not yet freed.
 */
void ca_allocator_free(struct CaAllocator *alloc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COUPON_ALLOC_H */

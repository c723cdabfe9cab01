#ifndef RARE_H
#define RARE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RareStatus {
  RARE_STATUS_OK = 0,
  RARE_STATUS_NULL_ARGUMENT = 1,
  RARE_STATUS_INVALID_UTF8 = 2,
  RARE_STATUS_IO = 3,
  RARE_STATUS_FORMAT = 4,
  RARE_STATUS_DIM_MISMATCH = 5,
  RARE_STATUS_NON_FINITE = 6,
  RARE_STATUS_INVALID_ARGUMENT = 7,
  RARE_STATUS_BUFFER_TOO_SMALL = 8,
  RARE_STATUS_PANIC = 9,
} RareStatus;

/**
 * Exact dense index over a corpus.
 */
typedef struct RareIndex RareIndex;

/**
 * Trained embedder.
 */
typedef struct RareModel RareModel;

/**
 * Example pool with its lexical index.
 */
typedef struct RarePool RarePool;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rare_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null; `needed` must be null or
 * writable.
 */
enum RareStatus rare_last_error(char *buf, size_t len, size_t *needed);

/**
 * # Safety
 * `path` must be a valid C string and `out` writable.
 */
enum RareStatus rare_model_load(const char *path, struct RareModel **out);

/**
 * Random untrained model with unigram and bigram features.
 *
 * # Safety
 * `out` must be writable.
 */
enum RareStatus rare_model_random(size_t hash_dim,
                                  size_t embed_dim,
                                  uint64_t seed,
                                  struct RareModel **out);

/**
 * # Safety
 * `model` and `path` must be valid.
 */
enum RareStatus rare_model_save(const struct RareModel *model, const char *path);

/**
 * Embedding dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rare_model_dim(const struct RareModel *model);

/**
 * Writes the embedding of `text` into `out[0..len]`; `len` must equal the
 * model dimension.
 *
 * # Safety
 * `out` must be valid for `len` doubles.
 */
enum RareStatus rare_model_embed(const struct RareModel *model,
                                 const char *text,
                                 double *out,
                                 size_t len);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void rare_model_free(struct RareModel *model);

/**
 * Embeds every document of a `corpus.jsonl` file.
 *
 * # Safety
 * Pointers must be valid; `out` writable.
 */
enum RareStatus rare_index_build(const struct RareModel *model,
                                 const char *corpus_path,
                                 size_t threads,
                                 struct RareIndex **out);

/**
 * # Safety
 * `path` must be a valid C string and `out` writable.
 */
enum RareStatus rare_index_load(const char *path, struct RareIndex **out);

/**
 * # Safety
 * `index` and `path` must be valid.
 */
enum RareStatus rare_index_save(const struct RareIndex *index, const char *path);

/**
 * Number of documents, or 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t rare_index_len(const struct RareIndex *index);

/**
 * Copies the id of document `ordinal` into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null; `needed` null or writable.
 */
enum RareStatus rare_index_doc_id(const struct RareIndex *index,
                                  size_t ordinal,
                                  char *buf,
                                  size_t len,
                                  size_t *needed);

/**
 * Top-`k` documents for a query embedding. Writes up to `k` ordinals and
 * scores and the count to `*n_out`.
 *
 * # Safety
 * `query` valid for `dim` doubles; `ordinals` and `scores` valid for `k`
 * entries; `n_out` writable.
 */
enum RareStatus rare_index_search(const struct RareIndex *index,
                                  const double *query,
                                  size_t dim,
                                  size_t k,
                                  size_t *ordinals,
                                  double *scores,
                                  size_t *n_out);

/**
 * # Safety
 * `index` must be null or a handle from this library, freed once.
 */
void rare_index_free(struct RareIndex *index);

/**
 * Loads a `pool.jsonl` example pool.
 *
 * # Safety
 * `path` must be a valid C string and `out` writable.
 */
enum RareStatus rare_pool_load(const char *path, struct RarePool **out);

/**
 * # Safety
 * `pool` must be null or a live handle.
 */
size_t rare_pool_len(const struct RarePool *pool);

/**
 * # Safety
 * `pool` must be null or a handle from this library, freed once.
 */
void rare_pool_free(struct RarePool *pool);

/**
 * Renders `query` with up to `k` retrieved examples from `pool` (may be
 * null when `format` is `"inst"` or `k` is 0).
 *
 * # Safety
 * String arguments must be valid C strings; `buf` valid for `len` bytes or
 * null; `needed` null or writable.
 */
enum RareStatus rare_render(const struct RarePool *pool,
                            const char *instruction,
                            const char *query,
                            const char *format,
                            size_t k,
                            char *buf,
                            size_t len,
                            size_t *needed);

/**
 * Full pipeline for one query: example retrieval, rendering, encoding and
 * top-`top_k` search.
 *
 * # Safety
 * As [`rare_render`] and [`rare_index_search`].
 */
enum RareStatus rare_search_text(const struct RareModel *model,
                                 const struct RareIndex *index,
                                 const struct RarePool *pool,
                                 const char *instruction,
                                 const char *query,
                                 const char *format,
                                 size_t k,
                                 size_t top_k,
                                 size_t *ordinals,
                                 double *scores,
                                 size_t *n_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RARE_H */

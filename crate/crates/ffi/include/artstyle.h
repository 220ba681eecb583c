#ifndef ARTSTYLE_H
#define ARTSTYLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArtstyleStatus {
  ARTSTYLE_STATUS_OK = 0,
  ARTSTYLE_STATUS_NULL_POINTER = 1,
  ARTSTYLE_STATUS_INVALID_ARGUMENT = 2,
  // Malformed checkpoint or other encoded input.
  ARTSTYLE_STATUS_FORMAT = 3,
  // NaN/Inf produced or encountered.
  ARTSTYLE_STATUS_NUMERIC = 4,
  // Output buffer length does not match what the call produces.
  ARTSTYLE_STATUS_BUFFER_SIZE = 5,
  // A bug inside the library; the handle involved should be freed.
  ARTSTYLE_STATUS_INTERNAL = 6,
} ArtstyleStatus;

typedef enum ArtstyleGraphKind {
  // Undirected maximum-cosine-similarity network.
  ARTSTYLE_GRAPH_KIND_SIMILARITY = 0,
  // Directed, earlier to later artist.
  ARTSTYLE_GRAPH_KIND_LINEAGE = 1,
} ArtstyleGraphKind;

// Opaque classifier handle.
typedef struct ArtstyleNetwork ArtstyleNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failure on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *artstyle_last_error(void);

// Freshly initialised network. `filters` may be NULL when `n_blocks` is 0.
//
// # Safety
// `filters` must point to `n_blocks` readable values and `out` must be
// writable.
enum ArtstyleStatus artstyle_network_init(size_t input_height,
                                          size_t input_width,
                                          const size_t *filters,
                                          size_t n_blocks,
                                          uint64_t seed,
                                          struct ArtstyleNetwork **out);

// Network from checkpoint bytes. The input size is not stored in a
// checkpoint; pass 0 for both to assume a square input.
//
// # Safety
// `bytes` must point to `len` readable bytes and `out` must be writable.
enum ArtstyleStatus artstyle_network_load(const uint8_t *bytes,
                                          size_t len,
                                          size_t input_height,
                                          size_t input_width,
                                          struct ArtstyleNetwork **out);

// Checkpoint bytes for `net`, released with `artstyle_bytes_free`.
//
// # Safety
// `net` must be a live handle; `out` and `out_len` must be writable.
enum ArtstyleStatus artstyle_network_save(const struct ArtstyleNetwork *net,
                                          uint8_t **out,
                                          size_t *out_len);

// # Safety
// `net` must be NULL or a handle not yet freed.
void artstyle_network_free(struct ArtstyleNetwork *net);

// # Safety
// `net` must be a live handle; the out pointers must be writable.
enum ArtstyleStatus artstyle_network_input_size(const struct ArtstyleNetwork *net,
                                                size_t *height,
                                                size_t *width);

// The 512 post-ReLU activations of the feature layer.
//
// # Safety
// `image` must hold `image_len` doubles and `out` `out_len` doubles.
enum ArtstyleStatus artstyle_network_features(const struct ArtstyleNetwork *net,
                                              const double *image,
                                              size_t image_len,
                                              double *out,
                                              size_t out_len);

// Probabilities of the nine style classes, in label order.
//
// # Safety
// `image` must hold `image_len` doubles and `out` `out_len` doubles.
enum ArtstyleStatus artstyle_network_predict(const struct ArtstyleNetwork *net,
                                             const double *image,
                                             size_t image_len,
                                             double *out,
                                             size_t out_len);

// Grad-CAM map for `class_index` (0-based), upsampled to the input size:
// `out_len` must be `height * width`. `layer` names a convolution block
// such as "conv2"; NULL selects the last one.
//
// # Safety
// `image` must hold `image_len` doubles, `out` `out_len` doubles, and
// `layer` must be NULL or a NUL-terminated string.
enum ArtstyleStatus artstyle_network_gradcam(const struct ArtstyleNetwork *net,
                                             const double *image,
                                             size_t image_len,
                                             size_t class_index,
                                             const char *layer,
                                             double *out,
                                             size_t out_len);

// # Safety
// `a` and `b` must hold `len` doubles; `out` must be writable.
enum ArtstyleStatus artstyle_euclidean(const double *a, const double *b, size_t len, double *out);

// Fails with `InvalidArgument` when either vector has zero norm.
//
// # Safety
// `a` and `b` must hold `len` doubles; `out` must be writable.
enum ArtstyleStatus artstyle_cosine_similarity(const double *a,
                                               const double *b,
                                               size_t len,
                                               double *out);

// `1 - cosine_similarity`.
//
// # Safety
// `a` and `b` must hold `len` doubles; `out` must be writable.
enum ArtstyleStatus artstyle_cosine_distance(const double *a,
                                             const double *b,
                                             size_t len,
                                             double *out);

// Exact T-SNE of `n` row-major points of dimension `dim` into `out_dims`
// (2 or 3). Schedule parameters are the library defaults. `out_len` must
// be `n * out_dims`. `final_kl` may be NULL.
//
// # Safety
// `data` must hold `n * dim` doubles and `out` `out_len` doubles.
enum ArtstyleStatus artstyle_tsne(const double *data,
                                  size_t n,
                                  size_t dim,
                                  size_t out_dims,
                                  double perplexity,
                                  size_t iterations,
                                  uint64_t seed,
                                  double *out,
                                  size_t out_len,
                                  double *final_kl);

// Builds an artist graph and returns it as JSON, released with
// `artstyle_string_free`.
//
// `ids` holds `n` NUL-terminated artist ids, `vectors` `n * dim` doubles
// (one mean embedding per artist), `years` `n` mean years (NaN when
// unknown; a lineage requires every year) and `styles` `n` zero-based
// class labels.
//
// # Safety
// Every pointer must reference the number of elements described above;
// `out` must be writable.
enum ArtstyleStatus artstyle_graph_json(enum ArtstyleGraphKind kind,
                                        const char *const *ids,
                                        const double *vectors,
                                        const double *years,
                                        const uint32_t *styles,
                                        size_t n,
                                        size_t dim,
                                        char **out);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void artstyle_string_free(char *s);

// # Safety
// `bytes`/`len` must be NULL/any or a buffer returned by this library and
// not yet freed.
void artstyle_bytes_free(uint8_t *bytes, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARTSTYLE_H */

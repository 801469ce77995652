/*
 * dnnp C API: deep-learning primitives behind opaque handles and
 * descriptors. Every function returns a dnnp_status; no other error
 * channel exists. All sizes and strides are 64-bit signed element counts.
 * Buffers are caller-owned; scalars (alpha/beta) are passed by pointer
 * and read according to the element type of the output descriptor.
 *
 * Thread-safety: a handle is immutable after creation; every entry point
 * may be called concurrently from multiple threads as long as output
 * buffers are disjoint.
 */

#ifndef DNNP_H
#define DNNP_H

#include <stdint.h>

#define DNNP_VERSION_MAJOR 0
#define DNNP_VERSION_MINOR 1
#define DNNP_VERSION_PATCH 0
#define DNNP_VERSION \
    (DNNP_VERSION_MAJOR * 10000 + DNNP_VERSION_MINOR * 100 + DNNP_VERSION_PATCH)

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dnnp_status {
    DNNP_STATUS_OK = 0,
    DNNP_STATUS_BAD_PARAM = 1,
    DNNP_STATUS_SHAPE_MISMATCH = 2,
    DNNP_STATUS_ALLOC_FAILED = 3,
    DNNP_STATUS_NOT_SUPPORTED = 4
} dnnp_status;

typedef enum dnnp_elem_type {
    DNNP_F32 = 0,
    DNNP_F64 = 1
} dnnp_elem_type;

typedef enum dnnp_conv_mode {
    DNNP_CONVOLUTION = 0,
    DNNP_CROSS_CORRELATION = 1
} dnnp_conv_mode;

typedef enum dnnp_engine {
    DNNP_ENGINE_DIRECT = 0,
    DNNP_ENGINE_EXPLICIT = 1,
    DNNP_ENGINE_IMPLICIT = 2
} dnnp_engine;

typedef enum dnnp_activation_kind {
    DNNP_ACTIVATION_SIGMOID = 0,
    DNNP_ACTIVATION_RELU = 1,
    DNNP_ACTIVATION_TANH = 2
} dnnp_activation_kind;

typedef enum dnnp_softmax_mode {
    DNNP_SOFTMAX_PER_IMAGE = 0,
    DNNP_SOFTMAX_PER_SPATIAL = 1
} dnnp_softmax_mode;

typedef enum dnnp_pool_kind {
    DNNP_POOL_MAX = 0,
    DNNP_POOL_AVERAGE = 1
} dnnp_pool_kind;

typedef struct dnnp_context *dnnp_handle;
typedef struct dnnp_tensor_desc_t *dnnp_tensor_desc;
typedef struct dnnp_filter_desc_t *dnnp_filter_desc;
typedef struct dnnp_conv_desc_t *dnnp_conv_desc;
typedef struct dnnp_pooling_desc_t *dnnp_pooling_desc;

int64_t dnnp_version(void);
const char *dnnp_status_string(dnnp_status status);

/* ---- library context ------------------------------------------------ */

dnnp_status dnnp_create(dnnp_handle *handle);
dnnp_status dnnp_destroy(dnnp_handle handle);
/* worker threads the convolution engines may use (>= 1) */
dnnp_status dnnp_set_threads(dnnp_handle handle, int64_t threads);
dnnp_status dnnp_get_threads(dnnp_handle handle, int64_t *threads);

/* ---- tensor descriptors (4-D, strided) ------------------------------ */

dnnp_status dnnp_tensor_desc_create(dnnp_tensor_desc *desc);
dnnp_status dnnp_tensor_desc_destroy(dnnp_tensor_desc desc);
/* dense NCHW layout */
dnnp_status dnnp_tensor_desc_set(dnnp_tensor_desc desc, dnnp_elem_type type,
                                 int64_t n, int64_t c, int64_t h, int64_t w);
/* arbitrary element strides per dimension */
dnnp_status dnnp_tensor_desc_set_ex(dnnp_tensor_desc desc, dnnp_elem_type type,
                                    int64_t n, int64_t c, int64_t h, int64_t w,
                                    int64_t stride_n, int64_t stride_c,
                                    int64_t stride_h, int64_t stride_w);
dnnp_status dnnp_tensor_desc_get(dnnp_tensor_desc desc, dnnp_elem_type *type,
                                 int64_t *n, int64_t *c, int64_t *h, int64_t *w,
                                 int64_t *stride_n, int64_t *stride_c,
                                 int64_t *stride_h, int64_t *stride_w);

/* ---- filter descriptors (dense KCRS) --------------------------------- */

dnnp_status dnnp_filter_desc_create(dnnp_filter_desc *desc);
dnnp_status dnnp_filter_desc_destroy(dnnp_filter_desc desc);
dnnp_status dnnp_filter_desc_set(dnnp_filter_desc desc, dnnp_elem_type type,
                                 int64_t k, int64_t c, int64_t r, int64_t s);
dnnp_status dnnp_filter_desc_get(dnnp_filter_desc desc, dnnp_elem_type *type,
                                 int64_t *k, int64_t *c, int64_t *r, int64_t *s);

/* ---- convolution descriptors ----------------------------------------- */

dnnp_status dnnp_conv_desc_create(dnnp_conv_desc *desc);
dnnp_status dnnp_conv_desc_destroy(dnnp_conv_desc desc);
dnnp_status dnnp_conv_desc_set(dnnp_conv_desc desc, int64_t u, int64_t v,
                               int64_t pad_h, int64_t pad_w,
                               dnnp_conv_mode mode, int accumulate);
dnnp_status dnnp_conv_desc_get(dnnp_conv_desc desc, int64_t *u, int64_t *v,
                               int64_t *pad_h, int64_t *pad_w,
                               dnnp_conv_mode *mode, int *accumulate);

/* ---- pooling descriptors --------------------------------------------- */

dnnp_status dnnp_pooling_desc_create(dnnp_pooling_desc *desc);
dnnp_status dnnp_pooling_desc_destroy(dnnp_pooling_desc desc);
dnnp_status dnnp_pooling_desc_set(dnnp_pooling_desc desc, dnnp_pool_kind kind,
                                  int64_t window_h, int64_t window_w,
                                  int64_t stride_h, int64_t stride_w,
                                  int64_t pad_h, int64_t pad_w);
dnnp_status dnnp_pooling_desc_get(dnnp_pooling_desc desc, dnnp_pool_kind *kind,
                                  int64_t *window_h, int64_t *window_w,
                                  int64_t *stride_h, int64_t *stride_w,
                                  int64_t *pad_h, int64_t *pad_w);

/* helper: output extents of a convolution (p, q may be NULL) */
dnnp_status dnnp_conv_output_shape(dnnp_tensor_desc x, dnnp_filter_desc f,
                                   dnnp_conv_desc conv,
                                   int64_t *n, int64_t *k,
                                   int64_t *p, int64_t *q);

/* ---- compute: convolution -------------------------------------------- */

/* y := alpha * conv(x, f) + beta * y */
dnnp_status dnnp_convolution_forward(dnnp_handle handle, const void *alpha,
                                     dnnp_tensor_desc x_desc, const void *x,
                                     dnnp_filter_desc f_desc, const void *f,
                                     dnnp_conv_desc conv, dnnp_engine engine,
                                     const void *beta,
                                     dnnp_tensor_desc y_desc, void *y);

dnnp_status dnnp_convolution_backward_data(dnnp_handle handle,
                                           dnnp_filter_desc f_desc,
                                           const void *f,
                                           dnnp_tensor_desc dy_desc,
                                           const void *dy,
                                           dnnp_conv_desc conv,
                                           dnnp_engine engine,
                                           dnnp_tensor_desc dx_desc, void *dx);

dnnp_status dnnp_convolution_backward_filter(dnnp_handle handle,
                                             dnnp_tensor_desc x_desc,
                                             const void *x,
                                             dnnp_tensor_desc dy_desc,
                                             const void *dy,
                                             dnnp_conv_desc conv,
                                             dnnp_engine engine,
                                             dnnp_filter_desc df_desc,
                                             void *df);

/* db_desc must describe a (1, k, 1, 1) tensor */
dnnp_status dnnp_convolution_backward_bias(dnnp_handle handle,
                                           dnnp_tensor_desc dy_desc,
                                           const void *dy,
                                           dnnp_tensor_desc db_desc, void *db);

/* ---- compute: activations, softmax, pooling -------------------------- */

dnnp_status dnnp_activation_forward(dnnp_handle handle,
                                    dnnp_activation_kind kind,
                                    dnnp_tensor_desc x_desc, const void *x,
                                    dnnp_tensor_desc y_desc, void *y);

/* derivative expressed in the forward output y */
dnnp_status dnnp_activation_backward(dnnp_handle handle,
                                     dnnp_activation_kind kind,
                                     dnnp_tensor_desc y_desc, const void *y,
                                     dnnp_tensor_desc dy_desc, const void *dy,
                                     dnnp_tensor_desc dx_desc, void *dx);

dnnp_status dnnp_softmax_forward(dnnp_handle handle, dnnp_softmax_mode mode,
                                 dnnp_tensor_desc x_desc, const void *x,
                                 dnnp_tensor_desc y_desc, void *y);

dnnp_status dnnp_softmax_backward(dnnp_handle handle, dnnp_softmax_mode mode,
                                  dnnp_tensor_desc y_desc, const void *y,
                                  dnnp_tensor_desc dy_desc, const void *dy,
                                  dnnp_tensor_desc dx_desc, void *dx);

/* argmax: int64 buffer with one entry per output element (max pooling
 * forward records into it; max pooling backward requires it); may be NULL
 * for average pooling and for max forward when no backward will follow */
dnnp_status dnnp_pooling_forward(dnnp_handle handle, dnnp_pooling_desc pool,
                                 dnnp_tensor_desc x_desc, const void *x,
                                 dnnp_tensor_desc y_desc, void *y,
                                 int64_t *argmax);

dnnp_status dnnp_pooling_backward(dnnp_handle handle, dnnp_pooling_desc pool,
                                  dnnp_tensor_desc y_desc, const void *y,
                                  dnnp_tensor_desc dy_desc, const void *dy,
                                  dnnp_tensor_desc x_desc, const void *x,
                                  dnnp_tensor_desc dx_desc, void *dx,
                                  const int64_t *argmax);

/* ---- compute: tensor utilities --------------------------------------- */

/* dst := alpha * src + beta * dst across any two layouts of one shape */
dnnp_status dnnp_transform(dnnp_handle handle, const void *alpha,
                           dnnp_tensor_desc src_desc, const void *src,
                           const void *beta,
                           dnnp_tensor_desc dst_desc, void *dst);

/* out := alpha * bias + beta * out, size-1 bias dimensions broadcast */
dnnp_status dnnp_add_broadcast(dnnp_handle handle, const void *alpha,
                               dnnp_tensor_desc bias_desc, const void *bias,
                               const void *beta,
                               dnnp_tensor_desc out_desc, void *out);

#ifdef __cplusplus
}
#endif

#endif /* DNNP_H */

/*
 * dnnp C API implementation.
 *
 * Descriptors and handles are plain C objects validated against a live
 * registry (so stale or double-destroyed pointers fail cleanly with a
 * status). Compute entry points marshal buffer addresses and descriptor
 * fields into an embedded Python runtime and execute the dnnp package
 * natively, which makes results bit-identical to the library's own path.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>

#include <pthread.h>
#include <stdint.h>
#include <stdlib.h>
#include <string.h>

#include "dnnp.h"

#ifndef DNNP_BRIDGE_DIR
#define DNNP_BRIDGE_DIR ""
#endif

/* descriptors bigger than this many elements are rejected outright;
 * protects the index arithmetic against nonsense stride fuzzing */
#define DNNP_MAX_SPAN_ELEMS (((int64_t)1) << 40)

/* ---- object kinds and registry --------------------------------------- */

enum obj_kind {
    KIND_HANDLE = 1,
    KIND_TENSOR,
    KIND_FILTER,
    KIND_CONV,
    KIND_POOL
};

struct dnnp_context {
    int64_t threads;
};

struct dnnp_tensor_desc_t {
    int configured;
    dnnp_elem_type elem;
    int64_t n, c, h, w;
    int64_t sn, sc, sh, sw;
};

struct dnnp_filter_desc_t {
    int configured;
    dnnp_elem_type elem;
    int64_t k, c, r, s;
};

struct dnnp_conv_desc_t {
    int configured;
    int64_t u, v, pad_h, pad_w;
    dnnp_conv_mode mode;
    int accumulate;
};

struct dnnp_pooling_desc_t {
    int configured;
    dnnp_pool_kind kind;
    int64_t wh, ww, sh, sw, ph, pw;
};

struct reg_entry {
    void *ptr;
    int kind;
};

static pthread_mutex_t g_lock = PTHREAD_MUTEX_INITIALIZER;
static struct reg_entry *g_reg = NULL;
static size_t g_reg_len = 0, g_reg_cap = 0;

static int reg_add(void *ptr, int kind)
{
    pthread_mutex_lock(&g_lock);
    if (g_reg_len == g_reg_cap) {
        size_t cap = g_reg_cap ? g_reg_cap * 2 : 64;
        struct reg_entry *r = realloc(g_reg, cap * sizeof(*r));
        if (!r) {
            pthread_mutex_unlock(&g_lock);
            return -1;
        }
        g_reg = r;
        g_reg_cap = cap;
    }
    g_reg[g_reg_len].ptr = ptr;
    g_reg[g_reg_len].kind = kind;
    g_reg_len++;
    pthread_mutex_unlock(&g_lock);
    return 0;
}

static int reg_has(const void *ptr, int kind)
{
    size_t i;
    int found = 0;
    if (!ptr)
        return 0;
    pthread_mutex_lock(&g_lock);
    for (i = 0; i < g_reg_len; i++) {
        if (g_reg[i].ptr == ptr && g_reg[i].kind == kind) {
            found = 1;
            break;
        }
    }
    pthread_mutex_unlock(&g_lock);
    return found;
}

static int reg_remove(const void *ptr, int kind)
{
    size_t i;
    int found = 0;
    if (!ptr)
        return 0;
    pthread_mutex_lock(&g_lock);
    for (i = 0; i < g_reg_len; i++) {
        if (g_reg[i].ptr == ptr && g_reg[i].kind == kind) {
            g_reg[i] = g_reg[g_reg_len - 1];
            g_reg_len--;
            found = 1;
            break;
        }
    }
    pthread_mutex_unlock(&g_lock);
    return found;
}

/* ---- embedded runtime ------------------------------------------------- */

static PyObject *g_bridge = NULL;
static int g_py_ready = 0;

static int ensure_python(void)
{
    int ok = 0;
    pthread_mutex_lock(&g_lock);
    if (g_py_ready) {
        pthread_mutex_unlock(&g_lock);
        return 0;
    }
    if (!Py_IsInitialized()) {
        Py_InitializeEx(0);
        /* drop the GIL acquired by initialization; every entry point
         * re-takes it via PyGILState_Ensure */
        PyEval_SaveThread();
    }
    {
        PyGILState_STATE gil = PyGILState_Ensure();
        PyObject *sys_path = PySys_GetObject("path"); /* borrowed */
        const char *env = getenv("DNNP_BRIDGE_PATH");
        const char *dirs[2];
        int i;
        dirs[0] = env;
        dirs[1] = DNNP_BRIDGE_DIR;
        for (i = 0; i < 2; i++) {
            if (dirs[i] && dirs[i][0] && sys_path) {
                PyObject *p = PyUnicode_FromString(dirs[i]);
                if (p) {
                    PyList_Append(sys_path, p);
                    Py_DECREF(p);
                }
            }
        }
        g_bridge = PyImport_ImportModule("dnnp_capi_bridge");
        if (g_bridge) {
            ok = 1;
        } else {
            PyErr_Print();
        }
        PyGILState_Release(gil);
    }
    g_py_ready = ok;
    pthread_mutex_unlock(&g_lock);
    return ok ? 0 : -1;
}

/* call a bridge function that returns an int status; steals args */
static dnnp_status bridge_call(const char *name, PyObject *args)
{
    dnnp_status st = DNNP_STATUS_NOT_SUPPORTED;
    PyObject *fn, *res;
    if (!args) {
        PyErr_Clear();
        return DNNP_STATUS_ALLOC_FAILED;
    }
    fn = PyObject_GetAttrString(g_bridge, name);
    if (fn) {
        res = PyObject_CallObject(fn, args);
        if (res) {
            long v = PyLong_AsLong(res);
            st = (v < 0 || PyErr_Occurred()) ? DNNP_STATUS_NOT_SUPPORTED
                                             : (dnnp_status)v;
            Py_DECREF(res);
        }
        Py_DECREF(fn);
    }
    if (PyErr_Occurred())
        PyErr_Clear();
    Py_DECREF(args);
    return st;
}

/* ---- small helpers ---------------------------------------------------- */

static int span_ok(const struct dnnp_tensor_desc_t *d)
{
    __int128 hi = 0, lo = 0, term;
    int64_t ext[4], str[4];
    int i;
    ext[0] = d->n; ext[1] = d->c; ext[2] = d->h; ext[3] = d->w;
    str[0] = d->sn; str[1] = d->sc; str[2] = d->sh; str[3] = d->sw;
    for (i = 0; i < 4; i++) {
        term = (__int128)(ext[i] - 1) * (__int128)str[i];
        if (term > 0)
            hi += term;
        else
            lo += term;
    }
    if (hi >= (__int128)DNNP_MAX_SPAN_ELEMS)
        return 0;
    if (lo <= -(__int128)DNNP_MAX_SPAN_ELEMS)
        return 0;
    return 1;
}

static int tensor_usable(const dnnp_tensor_desc desc, const void *buf)
{
    return reg_has(desc, KIND_TENSOR) && desc->configured && buf
           && span_ok(desc);
}

static int filter_usable(const dnnp_filter_desc desc, const void *buf)
{
    return reg_has(desc, KIND_FILTER) && desc->configured && buf;
}

static PyObject *tensor_tuple(const dnnp_tensor_desc desc, const void *buf)
{
    return Py_BuildValue("(KLLLLLLLLi)",
                         (unsigned long long)(uintptr_t)buf,
                         (long long)desc->n, (long long)desc->c,
                         (long long)desc->h, (long long)desc->w,
                         (long long)desc->sn, (long long)desc->sc,
                         (long long)desc->sh, (long long)desc->sw,
                         (int)desc->elem);
}

static PyObject *filter_tuple(const dnnp_filter_desc desc, const void *buf)
{
    return Py_BuildValue("(KLLLLi)",
                         (unsigned long long)(uintptr_t)buf,
                         (long long)desc->k, (long long)desc->c,
                         (long long)desc->r, (long long)desc->s,
                         (int)desc->elem);
}

static PyObject *conv_tuple(const dnnp_conv_desc desc)
{
    return Py_BuildValue("(LLLLii)",
                         (long long)desc->u, (long long)desc->v,
                         (long long)desc->pad_h, (long long)desc->pad_w,
                         (int)desc->mode, desc->accumulate);
}

static PyObject *pool_tuple(const dnnp_pooling_desc desc)
{
    return Py_BuildValue("(iLLLLLL)", (int)desc->kind,
                         (long long)desc->wh, (long long)desc->ww,
                         (long long)desc->sh, (long long)desc->sw,
                         (long long)desc->ph, (long long)desc->pw);
}

int64_t dnnp_version(void)
{
    return DNNP_VERSION;
}

const char *dnnp_status_string(dnnp_status status)
{
    switch (status) {
    case DNNP_STATUS_OK: return "ok";
    case DNNP_STATUS_BAD_PARAM: return "bad_param";
    case DNNP_STATUS_SHAPE_MISMATCH: return "shape_mismatch";
    case DNNP_STATUS_ALLOC_FAILED: return "alloc_failed";
    case DNNP_STATUS_NOT_SUPPORTED: return "not_supported";
    default: return "unknown";
    }
}

/* ---- handle ----------------------------------------------------------- */

dnnp_status dnnp_create(dnnp_handle *handle)
{
    struct dnnp_context *ctx;
    if (!handle)
        return DNNP_STATUS_BAD_PARAM;
    *handle = NULL;
    if (ensure_python() != 0)
        return DNNP_STATUS_NOT_SUPPORTED;
    ctx = calloc(1, sizeof(*ctx));
    if (!ctx)
        return DNNP_STATUS_ALLOC_FAILED;
    ctx->threads = 1;
    if (reg_add(ctx, KIND_HANDLE) != 0) {
        free(ctx);
        return DNNP_STATUS_ALLOC_FAILED;
    }
    *handle = ctx;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_destroy(dnnp_handle handle)
{
    if (!reg_remove(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    free(handle);
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_set_threads(dnnp_handle handle, int64_t threads)
{
    if (!reg_has(handle, KIND_HANDLE) || threads < 1)
        return DNNP_STATUS_BAD_PARAM;
    handle->threads = threads;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_get_threads(dnnp_handle handle, int64_t *threads)
{
    if (!reg_has(handle, KIND_HANDLE) || !threads)
        return DNNP_STATUS_BAD_PARAM;
    *threads = handle->threads;
    return DNNP_STATUS_OK;
}

/* ---- descriptor create/set/get/destroy -------------------------------- */

#define DEFINE_CREATE_DESTROY(name, type, kind)                              \
    dnnp_status dnnp_##name##_create(type *desc)                             \
    {                                                                        \
        type d;                                                              \
        if (!desc)                                                           \
            return DNNP_STATUS_BAD_PARAM;                                    \
        *desc = NULL;                                                        \
        d = calloc(1, sizeof(*d));                                           \
        if (!d)                                                              \
            return DNNP_STATUS_ALLOC_FAILED;                                 \
        if (reg_add(d, kind) != 0) {                                         \
            free(d);                                                         \
            return DNNP_STATUS_ALLOC_FAILED;                                 \
        }                                                                    \
        *desc = d;                                                           \
        return DNNP_STATUS_OK;                                               \
    }                                                                        \
    dnnp_status dnnp_##name##_destroy(type desc)                             \
    {                                                                        \
        if (!reg_remove(desc, kind))                                         \
            return DNNP_STATUS_BAD_PARAM;                                    \
        free(desc);                                                          \
        return DNNP_STATUS_OK;                                               \
    }

DEFINE_CREATE_DESTROY(tensor_desc, dnnp_tensor_desc, KIND_TENSOR)
DEFINE_CREATE_DESTROY(filter_desc, dnnp_filter_desc, KIND_FILTER)
DEFINE_CREATE_DESTROY(conv_desc, dnnp_conv_desc, KIND_CONV)
DEFINE_CREATE_DESTROY(pooling_desc, dnnp_pooling_desc, KIND_POOL)

static int elem_valid(dnnp_elem_type t)
{
    return t == DNNP_F32 || t == DNNP_F64;
}

dnnp_status dnnp_tensor_desc_set_ex(dnnp_tensor_desc desc, dnnp_elem_type type,
                                    int64_t n, int64_t c, int64_t h, int64_t w,
                                    int64_t stride_n, int64_t stride_c,
                                    int64_t stride_h, int64_t stride_w)
{
    if (!reg_has(desc, KIND_TENSOR) || !elem_valid(type))
        return DNNP_STATUS_BAD_PARAM;
    if (n < 1 || c < 1 || h < 1 || w < 1)
        return DNNP_STATUS_BAD_PARAM;
    desc->elem = type;
    desc->n = n; desc->c = c; desc->h = h; desc->w = w;
    desc->sn = stride_n; desc->sc = stride_c;
    desc->sh = stride_h; desc->sw = stride_w;
    if (!span_ok(desc)) {
        desc->configured = 0;
        return DNNP_STATUS_BAD_PARAM;
    }
    desc->configured = 1;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_tensor_desc_set(dnnp_tensor_desc desc, dnnp_elem_type type,
                                 int64_t n, int64_t c, int64_t h, int64_t w)
{
    if (n < 1 || c < 1 || h < 1 || w < 1)
        return DNNP_STATUS_BAD_PARAM;
    return dnnp_tensor_desc_set_ex(desc, type, n, c, h, w,
                                   c * h * w, h * w, w, 1);
}

dnnp_status dnnp_tensor_desc_get(dnnp_tensor_desc desc, dnnp_elem_type *type,
                                 int64_t *n, int64_t *c, int64_t *h, int64_t *w,
                                 int64_t *stride_n, int64_t *stride_c,
                                 int64_t *stride_h, int64_t *stride_w)
{
    if (!reg_has(desc, KIND_TENSOR) || !desc->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!type || !n || !c || !h || !w
        || !stride_n || !stride_c || !stride_h || !stride_w)
        return DNNP_STATUS_BAD_PARAM;
    *type = desc->elem;
    *n = desc->n; *c = desc->c; *h = desc->h; *w = desc->w;
    *stride_n = desc->sn; *stride_c = desc->sc;
    *stride_h = desc->sh; *stride_w = desc->sw;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_filter_desc_set(dnnp_filter_desc desc, dnnp_elem_type type,
                                 int64_t k, int64_t c, int64_t r, int64_t s)
{
    if (!reg_has(desc, KIND_FILTER) || !elem_valid(type))
        return DNNP_STATUS_BAD_PARAM;
    if (k < 1 || c < 1 || r < 1 || s < 1)
        return DNNP_STATUS_BAD_PARAM;
    if ((__int128)k * c * r * s >= (__int128)DNNP_MAX_SPAN_ELEMS)
        return DNNP_STATUS_BAD_PARAM;
    desc->elem = type;
    desc->k = k; desc->c = c; desc->r = r; desc->s = s;
    desc->configured = 1;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_filter_desc_get(dnnp_filter_desc desc, dnnp_elem_type *type,
                                 int64_t *k, int64_t *c, int64_t *r, int64_t *s)
{
    if (!reg_has(desc, KIND_FILTER) || !desc->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!type || !k || !c || !r || !s)
        return DNNP_STATUS_BAD_PARAM;
    *type = desc->elem;
    *k = desc->k; *c = desc->c; *r = desc->r; *s = desc->s;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_conv_desc_set(dnnp_conv_desc desc, int64_t u, int64_t v,
                               int64_t pad_h, int64_t pad_w,
                               dnnp_conv_mode mode, int accumulate)
{
    if (!reg_has(desc, KIND_CONV))
        return DNNP_STATUS_BAD_PARAM;
    if (u < 1 || v < 1 || pad_h < 0 || pad_w < 0)
        return DNNP_STATUS_BAD_PARAM;
    if (mode != DNNP_CONVOLUTION && mode != DNNP_CROSS_CORRELATION)
        return DNNP_STATUS_BAD_PARAM;
    desc->u = u; desc->v = v;
    desc->pad_h = pad_h; desc->pad_w = pad_w;
    desc->mode = mode;
    desc->accumulate = accumulate ? 1 : 0;
    desc->configured = 1;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_conv_desc_get(dnnp_conv_desc desc, int64_t *u, int64_t *v,
                               int64_t *pad_h, int64_t *pad_w,
                               dnnp_conv_mode *mode, int *accumulate)
{
    if (!reg_has(desc, KIND_CONV) || !desc->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!u || !v || !pad_h || !pad_w || !mode || !accumulate)
        return DNNP_STATUS_BAD_PARAM;
    *u = desc->u; *v = desc->v;
    *pad_h = desc->pad_h; *pad_w = desc->pad_w;
    *mode = desc->mode;
    *accumulate = desc->accumulate;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_pooling_desc_set(dnnp_pooling_desc desc, dnnp_pool_kind kind,
                                  int64_t window_h, int64_t window_w,
                                  int64_t stride_h, int64_t stride_w,
                                  int64_t pad_h, int64_t pad_w)
{
    if (!reg_has(desc, KIND_POOL))
        return DNNP_STATUS_BAD_PARAM;
    if (kind != DNNP_POOL_MAX && kind != DNNP_POOL_AVERAGE)
        return DNNP_STATUS_BAD_PARAM;
    if (window_h < 1 || window_w < 1 || stride_h < 1 || stride_w < 1
        || pad_h < 0 || pad_w < 0)
        return DNNP_STATUS_BAD_PARAM;
    desc->kind = kind;
    desc->wh = window_h; desc->ww = window_w;
    desc->sh = stride_h; desc->sw = stride_w;
    desc->ph = pad_h; desc->pw = pad_w;
    desc->configured = 1;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_pooling_desc_get(dnnp_pooling_desc desc, dnnp_pool_kind *kind,
                                  int64_t *window_h, int64_t *window_w,
                                  int64_t *stride_h, int64_t *stride_w,
                                  int64_t *pad_h, int64_t *pad_w)
{
    if (!reg_has(desc, KIND_POOL) || !desc->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!kind || !window_h || !window_w || !stride_h || !stride_w
        || !pad_h || !pad_w)
        return DNNP_STATUS_BAD_PARAM;
    *kind = desc->kind;
    *window_h = desc->wh; *window_w = desc->ww;
    *stride_h = desc->sh; *stride_w = desc->sw;
    *pad_h = desc->ph; *pad_w = desc->pw;
    return DNNP_STATUS_OK;
}

dnnp_status dnnp_conv_output_shape(dnnp_tensor_desc x, dnnp_filter_desc f,
                                   dnnp_conv_desc conv,
                                   int64_t *n, int64_t *k,
                                   int64_t *p, int64_t *q)
{
    PyGILState_STATE gil;
    PyObject *fn, *args, *res;
    dnnp_status st = DNNP_STATUS_NOT_SUPPORTED;
    if (!g_py_ready)
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(x, KIND_TENSOR) || !x->configured
        || !reg_has(f, KIND_FILTER) || !f->configured
        || !reg_has(conv, KIND_CONV) || !conv->configured)
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    args = Py_BuildValue("(NNN)", tensor_tuple(x, (void *)1),
                         filter_tuple(f, (void *)1), conv_tuple(conv));
    fn = args ? PyObject_GetAttrString(g_bridge, "conv_output_shape") : NULL;
    res = fn ? PyObject_CallObject(fn, args) : NULL;
    if (res && PyTuple_Check(res) && PyTuple_GET_SIZE(res) == 5) {
        long v = PyLong_AsLong(PyTuple_GET_ITEM(res, 0));
        st = (dnnp_status)v;
        if (st == DNNP_STATUS_OK) {
            if (n) *n = PyLong_AsLongLong(PyTuple_GET_ITEM(res, 1));
            if (k) *k = PyLong_AsLongLong(PyTuple_GET_ITEM(res, 2));
            if (p) *p = PyLong_AsLongLong(PyTuple_GET_ITEM(res, 3));
            if (q) *q = PyLong_AsLongLong(PyTuple_GET_ITEM(res, 4));
        }
    }
    Py_XDECREF(res);
    Py_XDECREF(fn);
    Py_XDECREF(args);
    if (PyErr_Occurred())
        PyErr_Clear();
    PyGILState_Release(gil);
    return st;
}

/* ---- compute entry points --------------------------------------------- */

dnnp_status dnnp_convolution_forward(dnnp_handle handle, const void *alpha,
                                     dnnp_tensor_desc x_desc, const void *x,
                                     dnnp_filter_desc f_desc, const void *f,
                                     dnnp_conv_desc conv, dnnp_engine engine,
                                     const void *beta,
                                     dnnp_tensor_desc y_desc, void *y)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE) || !alpha || !beta)
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(x_desc, x) || !filter_usable(f_desc, f)
        || !tensor_usable(y_desc, y))
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(conv, KIND_CONV) || !conv->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (engine != DNNP_ENGINE_DIRECT && engine != DNNP_ENGINE_EXPLICIT
        && engine != DNNP_ENGINE_IMPLICIT)
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("conv_forward", Py_BuildValue(
        "(KNNNiKNL)",
        (unsigned long long)(uintptr_t)alpha,
        tensor_tuple(x_desc, x), filter_tuple(f_desc, f), conv_tuple(conv),
        (int)engine,
        (unsigned long long)(uintptr_t)beta,
        tensor_tuple(y_desc, y), (long long)handle->threads));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_convolution_backward_data(dnnp_handle handle,
                                           dnnp_filter_desc f_desc,
                                           const void *f,
                                           dnnp_tensor_desc dy_desc,
                                           const void *dy,
                                           dnnp_conv_desc conv,
                                           dnnp_engine engine,
                                           dnnp_tensor_desc dx_desc, void *dx)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    if (!filter_usable(f_desc, f) || !tensor_usable(dy_desc, dy)
        || !tensor_usable(dx_desc, dx))
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(conv, KIND_CONV) || !conv->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (engine != DNNP_ENGINE_DIRECT && engine != DNNP_ENGINE_EXPLICIT
        && engine != DNNP_ENGINE_IMPLICIT)
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("conv_backward_data", Py_BuildValue(
        "(NNNiNL)",
        filter_tuple(f_desc, f), tensor_tuple(dy_desc, dy), conv_tuple(conv),
        (int)engine, tensor_tuple(dx_desc, dx), (long long)handle->threads));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_convolution_backward_filter(dnnp_handle handle,
                                             dnnp_tensor_desc x_desc,
                                             const void *x,
                                             dnnp_tensor_desc dy_desc,
                                             const void *dy,
                                             dnnp_conv_desc conv,
                                             dnnp_engine engine,
                                             dnnp_filter_desc df_desc,
                                             void *df)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(x_desc, x) || !tensor_usable(dy_desc, dy)
        || !filter_usable(df_desc, df))
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(conv, KIND_CONV) || !conv->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (engine != DNNP_ENGINE_DIRECT && engine != DNNP_ENGINE_EXPLICIT
        && engine != DNNP_ENGINE_IMPLICIT)
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("conv_backward_filter", Py_BuildValue(
        "(NNNiNL)",
        tensor_tuple(x_desc, x), tensor_tuple(dy_desc, dy), conv_tuple(conv),
        (int)engine, filter_tuple(df_desc, df), (long long)handle->threads));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_convolution_backward_bias(dnnp_handle handle,
                                           dnnp_tensor_desc dy_desc,
                                           const void *dy,
                                           dnnp_tensor_desc db_desc, void *db)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(dy_desc, dy) || !tensor_usable(db_desc, db))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("conv_backward_bias", Py_BuildValue(
        "(NN)", tensor_tuple(dy_desc, dy), tensor_tuple(db_desc, db)));
    PyGILState_Release(gil);
    return st;
}

static int activation_valid(dnnp_activation_kind k)
{
    return k == DNNP_ACTIVATION_SIGMOID || k == DNNP_ACTIVATION_RELU
           || k == DNNP_ACTIVATION_TANH;
}

dnnp_status dnnp_activation_forward(dnnp_handle handle,
                                    dnnp_activation_kind kind,
                                    dnnp_tensor_desc x_desc, const void *x,
                                    dnnp_tensor_desc y_desc, void *y)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE) || !activation_valid(kind))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(x_desc, x) || !tensor_usable(y_desc, y))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("activation_forward", Py_BuildValue(
        "(iNN)", (int)kind, tensor_tuple(x_desc, x), tensor_tuple(y_desc, y)));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_activation_backward(dnnp_handle handle,
                                     dnnp_activation_kind kind,
                                     dnnp_tensor_desc y_desc, const void *y,
                                     dnnp_tensor_desc dy_desc, const void *dy,
                                     dnnp_tensor_desc dx_desc, void *dx)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE) || !activation_valid(kind))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(y_desc, y) || !tensor_usable(dy_desc, dy)
        || !tensor_usable(dx_desc, dx))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("activation_backward", Py_BuildValue(
        "(iNNN)", (int)kind, tensor_tuple(y_desc, y),
        tensor_tuple(dy_desc, dy), tensor_tuple(dx_desc, dx)));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_softmax_forward(dnnp_handle handle, dnnp_softmax_mode mode,
                                 dnnp_tensor_desc x_desc, const void *x,
                                 dnnp_tensor_desc y_desc, void *y)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE)
        || (mode != DNNP_SOFTMAX_PER_IMAGE && mode != DNNP_SOFTMAX_PER_SPATIAL))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(x_desc, x) || !tensor_usable(y_desc, y))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("softmax_forward", Py_BuildValue(
        "(iNN)", (int)mode, tensor_tuple(x_desc, x), tensor_tuple(y_desc, y)));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_softmax_backward(dnnp_handle handle, dnnp_softmax_mode mode,
                                  dnnp_tensor_desc y_desc, const void *y,
                                  dnnp_tensor_desc dy_desc, const void *dy,
                                  dnnp_tensor_desc dx_desc, void *dx)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE)
        || (mode != DNNP_SOFTMAX_PER_IMAGE && mode != DNNP_SOFTMAX_PER_SPATIAL))
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(y_desc, y) || !tensor_usable(dy_desc, dy)
        || !tensor_usable(dx_desc, dx))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("softmax_backward", Py_BuildValue(
        "(iNNN)", (int)mode, tensor_tuple(y_desc, y),
        tensor_tuple(dy_desc, dy), tensor_tuple(dx_desc, dx)));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_pooling_forward(dnnp_handle handle, dnnp_pooling_desc pool,
                                 dnnp_tensor_desc x_desc, const void *x,
                                 dnnp_tensor_desc y_desc, void *y,
                                 int64_t *argmax)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(pool, KIND_POOL) || !pool->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(x_desc, x) || !tensor_usable(y_desc, y))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("pooling_forward", Py_BuildValue(
        "(NNNK)", pool_tuple(pool), tensor_tuple(x_desc, x),
        tensor_tuple(y_desc, y), (unsigned long long)(uintptr_t)argmax));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_pooling_backward(dnnp_handle handle, dnnp_pooling_desc pool,
                                  dnnp_tensor_desc y_desc, const void *y,
                                  dnnp_tensor_desc dy_desc, const void *dy,
                                  dnnp_tensor_desc x_desc, const void *x,
                                  dnnp_tensor_desc dx_desc, void *dx,
                                  const int64_t *argmax)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE))
        return DNNP_STATUS_BAD_PARAM;
    if (!reg_has(pool, KIND_POOL) || !pool->configured)
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(y_desc, y) || !tensor_usable(dy_desc, dy)
        || !tensor_usable(x_desc, x) || !tensor_usable(dx_desc, dx))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("pooling_backward", Py_BuildValue(
        "(NNNNNK)", pool_tuple(pool), tensor_tuple(y_desc, y),
        tensor_tuple(dy_desc, dy), tensor_tuple(x_desc, x),
        tensor_tuple(dx_desc, dx), (unsigned long long)(uintptr_t)argmax));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_transform(dnnp_handle handle, const void *alpha,
                           dnnp_tensor_desc src_desc, const void *src,
                           const void *beta,
                           dnnp_tensor_desc dst_desc, void *dst)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE) || !alpha || !beta)
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(src_desc, src) || !tensor_usable(dst_desc, dst))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("transform", Py_BuildValue(
        "(KNKN)",
        (unsigned long long)(uintptr_t)alpha, tensor_tuple(src_desc, src),
        (unsigned long long)(uintptr_t)beta, tensor_tuple(dst_desc, dst)));
    PyGILState_Release(gil);
    return st;
}

dnnp_status dnnp_add_broadcast(dnnp_handle handle, const void *alpha,
                               dnnp_tensor_desc bias_desc, const void *bias,
                               const void *beta,
                               dnnp_tensor_desc out_desc, void *out)
{
    PyGILState_STATE gil;
    dnnp_status st;
    if (!reg_has(handle, KIND_HANDLE) || !alpha || !beta)
        return DNNP_STATUS_BAD_PARAM;
    if (!tensor_usable(bias_desc, bias) || !tensor_usable(out_desc, out))
        return DNNP_STATUS_BAD_PARAM;
    gil = PyGILState_Ensure();
    st = bridge_call("add_broadcast", Py_BuildValue(
        "(KNKN)",
        (unsigned long long)(uintptr_t)alpha, tensor_tuple(bias_desc, bias),
        (unsigned long long)(uintptr_t)beta, tensor_tuple(out_desc, out)));
    PyGILState_Release(gil);
    return st;
}

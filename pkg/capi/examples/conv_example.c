/*
 * Small end-to-end convolution through the C API: three 3x3 input maps,
 * two 2x2 filters, valid padding, unit stride. Prints the 2x2x2 output
 * and (optionally) writes its raw f32 bytes to argv[1] so it can be
 * compared bit-for-bit against the library's native path.
 */

#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>

#include "dnnp.h"

#define CHECK(call)                                                     \
    do {                                                                \
        dnnp_status st_ = (call);                                       \
        if (st_ != DNNP_STATUS_OK) {                                    \
            fprintf(stderr, "%s -> %s\n", #call, dnnp_status_string(st_)); \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(int argc, char **argv)
{
    enum { N = 1, C = 3, H = 3, W = 3, K = 2, R = 2, S = 2, P = 2, Q = 2 };
    float x[N * C * H * W], f[K * C * R * S], y[N * K * P * Q];
    float alpha = 1.0f, beta = 0.0f;
    dnnp_handle lib;
    dnnp_tensor_desc xd, yd;
    dnnp_filter_desc fd;
    dnnp_conv_desc cd;
    int64_t on, ok, op, oq;
    int i, k, p, q;

    /* deterministic integer-valued inputs, exact in f32 */
    for (i = 0; i < N * C * H * W; i++)
        x[i] = (float)((i % 11) - 5);
    for (i = 0; i < K * C * R * S; i++)
        f[i] = (float)(((i * 3) % 7) - 3);

    CHECK(dnnp_create(&lib));
    CHECK(dnnp_tensor_desc_create(&xd));
    CHECK(dnnp_tensor_desc_set(xd, DNNP_F32, N, C, H, W));
    CHECK(dnnp_filter_desc_create(&fd));
    CHECK(dnnp_filter_desc_set(fd, DNNP_F32, K, C, R, S));
    CHECK(dnnp_conv_desc_create(&cd));
    CHECK(dnnp_conv_desc_set(cd, 1, 1, 0, 0, DNNP_CONVOLUTION, 0));
    CHECK(dnnp_conv_output_shape(xd, fd, cd, &on, &ok, &op, &oq));
    if (on != N || ok != K || op != P || oq != Q) {
        fprintf(stderr, "unexpected output shape\n");
        return 1;
    }
    CHECK(dnnp_tensor_desc_create(&yd));
    CHECK(dnnp_tensor_desc_set(yd, DNNP_F32, N, K, P, Q));

    CHECK(dnnp_convolution_forward(lib, &alpha, xd, x, fd, f, cd,
                                   DNNP_ENGINE_IMPLICIT, &beta, yd, y));

    for (k = 0; k < K; k++) {
        printf("output map %d:\n", k);
        for (p = 0; p < P; p++) {
            for (q = 0; q < Q; q++)
                printf(" %8.1f", y[(k * P + p) * Q + q]);
            printf("\n");
        }
    }

    if (argc > 1) {
        FILE *fh = fopen(argv[1], "wb");
        if (!fh || fwrite(y, sizeof(float), N * K * P * Q, fh)
                       != N * K * P * Q) {
            fprintf(stderr, "cannot write %s\n", argv[1]);
            return 1;
        }
        fclose(fh);
    }

    CHECK(dnnp_tensor_desc_destroy(xd));
    CHECK(dnnp_tensor_desc_destroy(yd));
    CHECK(dnnp_filter_desc_destroy(fd));
    CHECK(dnnp_conv_desc_destroy(cd));
    CHECK(dnnp_destroy(lib));
    return 0;
}

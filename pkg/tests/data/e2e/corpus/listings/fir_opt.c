#include "fir.h"

void fir_opt(data_t *y, data_t x) {
    static data_t shift_reg[N];
#pragma HLS ARRAY_PARTITION variable=shift_reg complete
    acc_t acc = 0;
TDL:
    for (int i = N - 1; i > 0; i--) {
#pragma HLS UNROLL
        shift_reg[i] = shift_reg[i - 1];
    }
    shift_reg[0] = x;
MAC:
    for (int i = N - 1; i >= 0; i--) {
#pragma HLS UNROLL
        acc += shift_reg[i] * c[i];
    }
    *y = acc;
}

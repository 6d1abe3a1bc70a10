#include "matmul.h"

// C = A x B for N x N matrices
void matmul(int A[N][N], int B[N][N], int C[N][N]) {
    int i, j, k;
    int sum = 0;

row:
    for (i = 0; i < N; i++) {
    col:
        for (j = 0; j < N; j++) {
            sum = 0;
        prod:
            for (k = 0; k < N; k++) {
                sum += A[i][k] * B[k][j];
            }
            C[i][j] = sum;
        }
    }
}

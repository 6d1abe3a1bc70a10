#define N 32
void matmul(int A[N][N], int B[N][N], int C[N][N]);

#include <stdio.h>
#include <stdlib.h>
#include <omp.h>

#define N 512

static double a[N][N], b[N][N], c[N][N];

void init(void) {
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++) {
            a[i][j] = (double)(i + j) / N;
            b[i][j] = (double)(i - j) / N;
            c[i][j] = 0.0;
        }
    }
}

void matmul(void) {
    #pragma omp parallel for shared(a, b, c) schedule(static)
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++) {
            double sum = 0.0;
            for (int k = 0; k < N; k++) {
                sum += a[i][k] * b[k][j];
            }
            c[i][j] = sum;
        }
    }
}

int main(void) {
    init();
    double t0 = omp_get_wtime();
    matmul();
    double t1 = omp_get_wtime();
    printf("matmul %dx%d: %.3fs, c[0][0]=%f\n", N, N, t1 - t0, c[0][0]);
    return 0;
}

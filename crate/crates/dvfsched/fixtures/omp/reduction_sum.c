#include <stdio.h>
#include <stdlib.h>
#include <omp.h>

#define N (1 << 24)

int main(void) {
    double *x = malloc(N * sizeof(double));
    for (long i = 0; i < N; i++) {
        x[i] = 1.0 / (double)(i + 1);
    }

    double sum = 0.0;
    #pragma omp parallel for reduction(+:sum) shared(x)
    for (long i = 0; i < N; i++) {
        sum += x[i];
    }

    printf("harmonic partial sum: %.6f\n", sum);
    free(x);
    return 0;
}

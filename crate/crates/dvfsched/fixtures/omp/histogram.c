#include <stdio.h>
#include <stdlib.h>
#include <omp.h>

#define N (1 << 22)
#define BINS 256

/* Random-access bin updates: a worst case for cache locality and a
 * classic false-sharing / contention benchmark. */
int main(void) {
    unsigned char *data = malloc(N);
    unsigned seed = 12345;
    for (long i = 0; i < N; i++) {
        seed = seed * 1103515245u + 12345u;
        data[i] = (unsigned char)(seed >> 16);
    }

    long hist[BINS] = {0};
    #pragma omp parallel shared(data, hist)
    {
        long local[BINS] = {0};
        #pragma omp for
        for (long i = 0; i < N; i++) {
            local[data[i]]++;
        }
        #pragma omp critical
        {
            for (int b = 0; b < BINS; b++) {
                hist[b] += local[b];
            }
        }
    }

    long total = 0;
    for (int b = 0; b < BINS; b++) {
        total += hist[b];
    }
    printf("histogram total: %ld (expect %d)\n", total, N);
    free(data);
    return 0;
}

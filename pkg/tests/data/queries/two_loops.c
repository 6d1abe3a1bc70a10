void scale_then_sum(int a[64], int *out) {
    int s = 0;
    int tmp[64];
    for (int i = 0; i < 64; i++) {
        tmp[i] = a[i] * 3;
    }
    s = 1; /* between the loops { not a brace } */
    while (s < 64) {
        s += tmp[s];
    }
    *out = s;
}

#include <cstdio>
int main() { std::puts("csikit placeholder"); return 0; }

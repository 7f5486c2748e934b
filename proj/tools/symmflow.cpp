#include <cstdio>
int main() { std::puts("symmflow: not wired yet"); return 2; }

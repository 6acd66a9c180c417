#include <cstdio>
int main() { std::puts("cli stub"); return 0; }

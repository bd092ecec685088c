#include <cstdio>
int main(){ std::printf("wip\n"); return 0; }

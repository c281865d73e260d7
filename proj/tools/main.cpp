#include <cstdio>

int main() {
  std::puts("dfield CLI placeholder");
  return 0;
}

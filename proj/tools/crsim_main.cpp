#include <cstdio>

int main(int, char**) {
  std::puts("crsim: CLI not wired up yet");
  return 1;
}

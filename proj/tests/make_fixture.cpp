// Writes a small red-disc dataset (images, gt masks, manifest.csv) into argv[1].

#include <cstdio>

#include "fixture.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixture <dir>\n");
    return 2;
  }
  auto cases = ulcerflow::testing::random_disc_cases(77, 6);
  ulcerflow::testing::write_disc_dataset(argv[1], cases);
  return 0;
}

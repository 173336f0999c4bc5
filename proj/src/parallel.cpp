#include "melad/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

#include <omp.h>

namespace melad {

void set_num_threads(int n) {
  if (n < 1) n = omp_get_num_procs();
  omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

int threads_from_env() {
  const char* s = std::getenv("MELAD_THREADS");
  if (s == nullptr) return 0;
  int v = 0;
  auto [p, ec] = std::from_chars(s, s + std::strlen(s), v);
  if (ec != std::errc() || v < 1) return 0;
  return v;
}

}  // namespace melad

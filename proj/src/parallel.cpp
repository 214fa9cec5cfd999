#include "dms/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dms {

void set_thread_cap_from_env() {
  const char* v = std::getenv("DMS_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) return;
  omp_set_num_threads(static_cast<int>(n));
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace dms

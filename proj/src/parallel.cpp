#include "atlas/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace atlas {

std::size_t thread_count() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EMBEDDING_ATLAS_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) return std::size_t(cap);
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
  return hw;
}

} // namespace atlas

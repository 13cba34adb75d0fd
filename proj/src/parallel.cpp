#include "jobshop/parallel.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>

namespace jssp {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
  // Dense products stay single-threaded: the batch matrices here are thin
  // enough that Eigen's split costs more than it saves. Parallelism lives
  // in the explicit loops over nodes, edges, episodes and instances.
  Eigen::setNbThreads(1);
}

int threads() { return g_threads; }

}  // namespace jssp

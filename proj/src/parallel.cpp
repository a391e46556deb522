#include "dgct/parallel.hpp"

#include <omp.h>

namespace dgct {

namespace {
ExecutionPolicy g_policy;
}

void set_execution_policy(const ExecutionPolicy& policy) {
  g_policy = policy;
  omp_set_num_threads(policy.threads > 0 ? policy.threads : omp_get_num_procs());
}

const ExecutionPolicy& execution_policy() { return g_policy; }

int available_threads() { return omp_get_num_procs(); }

}  // namespace dgct

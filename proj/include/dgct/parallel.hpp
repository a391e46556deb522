#pragma once

namespace dgct {

/// Process-wide execution settings. In deterministic mode every reduction
/// runs in a fixed order that does not depend on the thread count.
struct ExecutionPolicy {
  int threads = 0;  // 0 = available parallelism
  bool deterministic = true;
};

void set_execution_policy(const ExecutionPolicy& policy);
const ExecutionPolicy& execution_policy();

int available_threads();

}  // namespace dgct

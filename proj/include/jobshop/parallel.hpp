#pragma once

namespace jssp {

// Process-wide worker count for the OpenMP kernels and episode loops.
// 1 selects the serial paths. All kernels produce identical results for
// any thread count; this only trades wall time.
void set_threads(int n);
int threads();

}  // namespace jssp

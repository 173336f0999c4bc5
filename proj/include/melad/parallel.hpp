#pragma once

namespace melad {

/// deterministic: every reduction runs in a fixed order, so outputs are
/// bit-identical across runs and thread counts. fast: reductions may be
/// split per thread; results agree with deterministic mode within 1e-5.
enum class ExecMode { deterministic, fast };

/// Worker threads used by the kernels. Values < 1 select the OpenMP default.
void set_num_threads(int n);
int num_threads();

/// Thread count from MELAD_THREADS, or 0 when unset or unparsable.
int threads_from_env();

}  // namespace melad

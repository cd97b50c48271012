#pragma once

namespace robustlr {

// Execution policy for the data-parallel kernels (grid evaluation, covering
// scans). The serial path is the reference implementation; results are
// bitwise identical because parallel loops only fill independent slots and
// all reductions run serially over the stored arrays.
enum class Exec { serial, parallel };

// Threads used by Exec::parallel. Honors ROBUSTLR_THREADS when set,
// otherwise the OpenMP default.
int max_threads();

} // namespace robustlr

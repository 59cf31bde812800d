#pragma once

namespace hashconv {

// Worker-count policy for all parallel kernels. Effective count is
// min(OpenMP max, HASHCONV_THREADS env var, programmatic override).
// Every kernel is written so results are bit-identical for any count.
int max_threads();

// override <= 0 clears the override.
void set_thread_override(int count);

}  // namespace hashconv

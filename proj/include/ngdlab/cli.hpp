#pragma once

namespace ngd {

// Full command-line surface: datagen, train, flow, certify, stability, loo,
// version. Returns 0 on success, 1 on validation errors, 2 on runtime
// failures (divergence, non-convergence, I/O).
int cli_main(int argc, const char* const* argv);

}  // namespace ngd

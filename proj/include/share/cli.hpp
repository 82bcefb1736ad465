#pragma once

namespace share {

/// Entry point of the `share` command. Returns the process exit code:
/// 0 success, 2 input error, 3 analysis error, 4 training failure.
int run_cli(int argc, char** argv);

}  // namespace share

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace tapsim::cli {

/// Parses argv and runs one subcommand. Returns the process exit status;
/// diagnostics go to `err`, results to `out`.
int execute(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tapsim::cli

#pragma once

#include <ostream>

namespace cathlab::service {

// Exit codes: 0 success, 1 usage, 2 data or validation error, 3 internal.
// Errors are written to err as one JSON object {"error", "message"}.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cathlab::service

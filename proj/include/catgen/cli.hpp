#pragma once

namespace catgen {

// Exit codes: 0 success, 2 config error, 3 data error, 4 estimation error.
int run_cli(int argc, const char* const* argv);

} // namespace catgen

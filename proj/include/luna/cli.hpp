#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "luna/core.hpp"

namespace luna::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kPartial = 3 };

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Literal inference for --param values: true/false, integer, real, else text.
ParamValue infer_literal(const std::string& text);

}  // namespace luna::cli

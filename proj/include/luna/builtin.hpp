#pragma once

#include "luna/core.hpp"

namespace luna {

/// String, embedding and reference-free metrics implemented in-process.
void register_builtin_metrics(Registry& registry);

/// A registry holding every built-in metric.
Registry default_registry();

}  // namespace luna

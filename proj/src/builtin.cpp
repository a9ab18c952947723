#include "luna/builtin.hpp"

#include "luna/embedding_metrics.hpp"
#include "luna/string_free.hpp"
#include "luna/string_ref.hpp"

namespace luna {

void register_builtin_metrics(Registry& registry) {
  metrics::register_string_ref_metrics(registry);
  metrics::register_string_free_metrics(registry);
  metrics::register_embedding_metrics(registry);
}

Registry default_registry() {
  Registry r;
  register_builtin_metrics(r);
  return r;
}

}  // namespace luna

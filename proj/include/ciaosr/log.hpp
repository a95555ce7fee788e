#pragma once

#include <string>

namespace ciaosr {

/// Writes "warning: <message>" to stderr, once per distinct message.
void warn_once(const std::string& message);

void set_quiet(bool quiet);

}  // namespace ciaosr

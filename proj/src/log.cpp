#include "ciaosr/log.hpp"

#include <iostream>
#include <mutex>
#include <set>

namespace ciaosr {
namespace {
std::mutex g_mutex;
std::set<std::string> g_seen;
bool g_quiet = false;
}  // namespace

void warn_once(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_quiet || !g_seen.insert(message).second) return;
  std::cerr << "warning: " << message << '\n';
}

void set_quiet(bool quiet) {
  std::lock_guard lock(g_mutex);
  g_quiet = quiet;
}

}  // namespace ciaosr

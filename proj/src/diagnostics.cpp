#include "msvar/diagnostics.hpp"

#include <iostream>

namespace msvar {
namespace {
thread_local ScopedWarningSink* current_sink = nullptr;
}

ScopedWarningSink::ScopedWarningSink() : previous_(current_sink) { current_sink = this; }

ScopedWarningSink::~ScopedWarningSink() { current_sink = previous_; }

void warn(std::string_view message) {
  if (current_sink) {
    current_sink->messages_.emplace_back(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

}  // namespace msvar

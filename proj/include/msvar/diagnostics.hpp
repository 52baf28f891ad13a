#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace msvar {

// Non-fatal numerical warnings. A ScopedWarningSink collects every warning
// raised on the current thread while it is alive; without one, warnings go
// to stderr.
void warn(std::string_view message);

class ScopedWarningSink {
 public:
  ScopedWarningSink();
  ~ScopedWarningSink();
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  std::vector<std::string> take() { return std::move(messages_); }

 private:
  friend void warn(std::string_view message);
  std::vector<std::string> messages_;
  ScopedWarningSink* previous_;
};

}  // namespace msvar

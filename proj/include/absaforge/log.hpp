#pragma once

#include <functional>
#include <string_view>

namespace absaforge::log {

using Sink = std::function<void(std::string_view level, std::string_view message)>;

/// Replaces the process-wide sink (default: stderr). Returns the old one.
Sink set_sink(Sink sink);

void warn(std::string_view message);
void info(std::string_view message);

}  // namespace absaforge::log

#include "absaforge/log.hpp"

#include <iostream>
#include <mutex>

namespace absaforge::log {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

Sink& current_sink() {
    static Sink sink = [](std::string_view level, std::string_view message) {
        std::cerr << "[" << level << "] " << message << '\n';
    };
    return sink;
}

void emit(std::string_view level, std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (current_sink()) current_sink()(level, message);
}

}  // namespace

Sink set_sink(Sink sink) {
    std::lock_guard lock(sink_mutex());
    auto old = std::move(current_sink());
    current_sink() = std::move(sink);
    return old;
}

void warn(std::string_view message) { emit("warn", message); }
void info(std::string_view message) { emit("info", message); }

}  // namespace absaforge::log

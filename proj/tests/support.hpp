#pragma once

// Shared helpers for the unit tests: fixture paths, golden files, temporary
// directories, log capture and an in-process HTTP stub.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unistd.h>
#include <vector>

#include "absaforge/llm_gateway.hpp"
#include "absaforge/log.hpp"
#include "httplib.h"

namespace testing {

namespace fs = std::filesystem;

inline fs::path test_dir() { return fs::path(ABSA_FORGE_TEST_DIR); }
inline fs::path fixture(std::string_view name) { return test_dir() / "fixtures" / name; }
inline fs::path golden_path(std::string_view name) { return test_dir() / "golden" / name; }

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

/// Golden text for `name`. With ABSA_FORGE_UPDATE_GOLDEN set the file is
/// rewritten from `actual` first.
inline std::string golden(std::string_view name, const std::string& actual) {
    if (std::getenv("ABSA_FORGE_UPDATE_GOLDEN")) write_file(golden_path(name), actual);
    return read_file(golden_path(name));
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("absaforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(std::string_view name) const { return path_ / name; }

private:
    fs::path path_;
};

/// Collects log lines while alive.
class LogCapture {
public:
    LogCapture() {
        old_ = absaforge::log::set_sink([this](std::string_view level, std::string_view msg) {
            lines_.push_back(std::string(level) + ": " + std::string(msg));
        });
    }
    ~LogCapture() { absaforge::log::set_sink(old_); }

    const std::vector<std::string>& lines() const { return lines_; }
    bool contains(std::string_view needle) const {
        for (const auto& l : lines_) {
            if (l.find(needle) != std::string::npos) return true;
        }
        return false;
    }

private:
    absaforge::log::Sink old_;
    std::vector<std::string> lines_;
};

/// httplib server on an ephemeral loopback port, served from a thread.
class StubServer {
public:
    httplib::Server server;

    void start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    std::string url(std::string_view path = "") const {
        return "http://127.0.0.1:" + std::to_string(port_) + std::string(path);
    }

private:
    int port_ = 0;
    std::thread thread_;
};

inline std::vector<absaforge::ScriptedBackend::Entry> entries(const std::vector<std::string>& replies) {
    std::vector<absaforge::ScriptedBackend::Entry> out;
    for (const auto& r : replies) {
        absaforge::ScriptedBackend::Entry e;
        e.response.content = r;
        out.push_back(std::move(e));
    }
    return out;
}

/// Gateway answering with `replies` in order.
inline std::unique_ptr<absaforge::Gateway> scripted_gateway(const std::vector<std::string>& replies) {
    return std::make_unique<absaforge::Gateway>(
        std::make_unique<absaforge::ScriptedBackend>(entries(replies), absaforge::ScriptMode::sequence), "scripted");
}

/// Unused loopback port: nothing listens there once this returns.
inline int closed_port() {
    httplib::Server s;
    const int port = s.bind_to_any_port("127.0.0.1");
    return port;
}

}  // namespace testing

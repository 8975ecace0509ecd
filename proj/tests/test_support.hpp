#pragma once

#include "crowdcalib/error.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture()
    {
        previous_ = crowdcalib::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { crowdcalib::set_warning_sink(previous_); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    bool contains(const std::string& needle) const
    {
        for (const auto& m : messages) {
            if (m.find(needle) != std::string::npos) return true;
        }
        return false;
    }

    std::vector<std::string> messages;

private:
    crowdcalib::WarningSink previous_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("crowdcalib_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testing

#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsearch/error.hpp"

namespace rws {

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
    const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp - secs).count();
    const std::time_t t = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

/// Append-only JSON-lines log. Without a path it only keeps records in memory.
/// Every record gets a "seq" number counting from the records already on disk.
class EventLog {
public:
    EventLog() = default;

    explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(*path_)) {
            std::ifstream in(*path_);
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) ++seq_;
        }
        out_.open(*path_, std::ios::binary | std::ios::app);
        if (!out_) throw IoError("cannot open event log " + path_->string());
    }

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    void append(nlohmann::json record) {
        std::lock_guard lock(mu_);
        record["seq"] = seq_++;
        if (out_.is_open()) {
            out_ << record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
            out_.flush();
            if (!out_) throw IoError("event log write failed");
        }
        records_.push_back(std::move(record));
    }

    /// Records appended through this instance.
    std::vector<nlohmann::json> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    std::size_t count(const std::string& type) const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& r : records_)
            if (r.value("type", "") == type) ++n;
        return n;
    }

    const std::optional<std::filesystem::path>& path() const { return path_; }

    /// Reads every record of a JSON-lines file.
    static std::vector<nlohmann::json> read_all(const std::filesystem::path& path) {
        std::vector<nlohmann::json> out;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read event log " + path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                out.push_back(nlohmann::json::parse(line));
            } catch (const nlohmann::json::parse_error& e) {
                throw IntegrityError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return out;
    }

private:
    std::optional<std::filesystem::path> path_;
    std::ofstream out_;
    mutable std::mutex mu_;
    std::vector<nlohmann::json> records_;
    std::uint64_t seq_ = 0;
};

} // namespace rws

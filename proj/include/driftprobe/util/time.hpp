#pragma once

#include <chrono>
#include <ctime>
#include <string>

namespace driftprobe::util {

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
inline std::string iso8601_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace driftprobe::util

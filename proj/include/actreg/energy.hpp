#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "actreg/error.hpp"

namespace actreg::energy {

enum class Phase { training, validation, testing };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::training: return "training";
    case Phase::validation: return "validation";
    case Phase::testing: return "testing";
  }
  return "?";
}

inline std::optional<Phase> parse_phase(std::string_view s) {
  if (s == "training") return Phase::training;
  if (s == "validation") return Phase::validation;
  if (s == "testing") return Phase::testing;
  return std::nullopt;
}

/// One wattage reading. CPU/memory utilisation are auxiliary and never enter joules.
struct PowerSample {
  double timestamp = 0.0;  // seconds, monotonic within a capture
  double watts = 0.0;
  Phase phase = Phase::training;
  std::optional<double> cpu_percent;
  std::optional<double> memory_percent;

  friend bool operator==(const PowerSample&, const PowerSample&) = default;
};

struct EnergyReport {
  double total_energy_joules = 0.0;
  double average_power_watts = 0.0;
  double duration_seconds = 0.0;

  friend bool operator==(const EnergyReport&, const EnergyReport&) = default;
};

/// Trapezoidal integration over the samples of `phase` (or all samples).
/// Trapezoids only join consecutive samples of the filtered sequence; fewer
/// than two samples gives the all-zero report.
inline EnergyReport integrate(std::span<const PowerSample> samples, std::optional<Phase> phase = std::nullopt) {
  std::vector<const PowerSample*> picked;
  picked.reserve(samples.size());
  for (const auto& s : samples) {
    if (!phase || s.phase == *phase) picked.push_back(&s);
  }
  if (picked.size() < 2) return {};

  EnergyReport r;
  for (std::size_t i = 0; i + 1 < picked.size(); ++i) {
    const double dt = picked[i + 1]->timestamp - picked[i]->timestamp;
    if (dt < 0.0) throw ValidationError("integrate: samples are not time-ordered at index " + std::to_string(i + 1));
    r.total_energy_joules += 0.5 * (picked[i]->watts + picked[i + 1]->watts) * dt;
  }
  r.duration_seconds = picked.back()->timestamp - picked.front()->timestamp;
  r.average_power_watts = r.duration_seconds > 0.0 ? r.total_energy_joules / r.duration_seconds : 0.0;
  return r;
}

/// Millijoules per correct prediction; nullopt when nothing was correct.
inline std::optional<double> energy_per_correct(double total_energy_joules, std::size_t n_correct) {
  if (n_correct == 0) return std::nullopt;
  return total_energy_joules * 1000.0 / static_cast<double>(n_correct);
}

// ---------------------------------------------------------------------------
// Replay files: one sample per line, `timestamp_s<TAB>watts<TAB>phase`, with
// optional trailing `<TAB>cpu_percent<TAB>memory_percent`.

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline std::vector<PowerSample> parse_replay(std::istream& in, const std::string& source = "<replay>") {
  std::vector<PowerSample> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(source + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 3 && fields.size() != 5) fail("expected 3 or 5 tab-separated fields");
    PowerSample s;
    const auto ts = detail::parse_double(fields[0]);
    const auto w = detail::parse_double(fields[1]);
    const auto ph = parse_phase(fields[2]);
    if (!ts) fail("bad timestamp '" + std::string(fields[0]) + "'");
    if (!w || *w < 0.0) fail("bad wattage '" + std::string(fields[1]) + "'");
    if (!ph) fail("bad phase '" + std::string(fields[2]) + "'");
    s.timestamp = *ts;
    s.watts = *w;
    s.phase = *ph;
    if (fields.size() == 5) {
      s.cpu_percent = detail::parse_double(fields[3]);
      s.memory_percent = detail::parse_double(fields[4]);
      if (!s.cpu_percent || !s.memory_percent) fail("bad auxiliary utilisation field");
    }
    if (!out.empty() && s.timestamp < out.back().timestamp) fail("timestamp goes backwards");
    out.push_back(s);
  }
  return out;
}

inline std::vector<PowerSample> replay_source(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open replay file " + path.string());
  return parse_replay(in, path.string());
}

inline std::string format_replay(std::span<const PowerSample> samples) {
  std::ostringstream os;
  char buf[128];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.17g\t%s", s.timestamp, s.watts, phase_name(s.phase));
    os << buf;
    if (s.cpu_percent && s.memory_percent) {
      std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g", *s.cpu_percent, *s.memory_percent);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Live telemetry through an external command that prints one decimal wattage.

enum class TelemetryStatus { idle, running, stopped, unavailable };

/// Polls `command` at `poll_hz` on a background thread, tagging each reading
/// with the phase most recently set by the caller. A failing command ends the
/// capture with status `unavailable`; samples are read only after stop().
class LiveTelemetry {
 public:
  LiveTelemetry(std::string command, double poll_hz) : command_(std::move(command)), poll_hz_(poll_hz) {
    if (!(poll_hz > 0.0) || !std::isfinite(poll_hz)) throw ValidationError("telemetry: poll rate must be positive");
  }
  LiveTelemetry(const LiveTelemetry&) = delete;
  LiveTelemetry& operator=(const LiveTelemetry&) = delete;
  ~LiveTelemetry() { stop(); }

  void start(Phase phase = Phase::training) {
    if (status_ != TelemetryStatus::idle) throw ValidationError("telemetry: already started");
    phase_.store(phase);
    origin_ = std::chrono::steady_clock::now();
    status_ = TelemetryStatus::running;
    worker_ = std::jthread([this](std::stop_token st) { loop(st); });
  }

  void set_phase(Phase phase) { phase_.store(phase); }

  void stop() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
    std::lock_guard lock(mu_);
    if (status_ == TelemetryStatus::running) status_ = TelemetryStatus::stopped;
  }

  TelemetryStatus status() const {
    std::lock_guard lock(mu_);
    return status_;
  }

  /// Captured samples; call after stop().
  std::vector<PowerSample> samples() const {
    std::lock_guard lock(mu_);
    return samples_;
  }

  /// Runs `command` once and parses its stdout as a wattage.
  static std::optional<double> read_once(const std::string& command) {
    FILE* pipe = ::popen((command + " 2>/dev/null").c_str(), "r");
    if (!pipe) return std::nullopt;
    std::string out;
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
    const int rc = ::pclose(pipe);
    if (rc != 0) return std::nullopt;
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r' || out.back() == ' ')) out.pop_back();
    const auto v = detail::parse_double(out);
    if (!v || *v < 0.0) return std::nullopt;
    return v;
  }

 private:
  void loop(std::stop_token st) {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / poll_hz_));
    auto next = origin_;
    while (!st.stop_requested()) {
      const Phase phase = phase_.load();
      const auto reading = read_once(command_);
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
      {
        std::lock_guard lock(mu_);
        if (!reading) {
          status_ = TelemetryStatus::unavailable;
          return;
        }
        samples_.push_back(PowerSample{t, *reading, phase, std::nullopt, std::nullopt});
      }
      next += period;
      std::mutex wait_mu;
      std::unique_lock wait_lock(wait_mu);
      std::condition_variable_any cv;
      cv.wait_until(wait_lock, st, next, [] { return false; });
    }
  }

  std::string command_;
  double poll_hz_;
  std::atomic<Phase> phase_{Phase::training};
  std::chrono::steady_clock::time_point origin_{};
  mutable std::mutex mu_;
  TelemetryStatus status_ = TelemetryStatus::idle;
  std::vector<PowerSample> samples_;
  std::jthread worker_;
};

}  // namespace actreg::energy

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace birdfl {

// Time-major matrices: one row per frame (or instance), one column per
// feature dimension.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr int kSampleRate = 44100;
inline constexpr int kFrameSize = 1024;
inline constexpr int kMelBands = 40;

// Error hierarchy. Every failure surfaced by the library is a subclass of
// birdfl::Error so callers can catch once at a stage boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& path, const std::string& what)
      : Error("cannot decode '" + path + "': " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the pipeline; names the stage and (when known) the clip that
// failed so grid logs stay readable.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string clip_id, const std::string& what)
      : Error("[" + stage + (clip_id.empty() ? "" : " " + clip_id) + "] " + what),
        stage_(std::move(stage)),
        clip_id_(std::move(clip_id)) {}
  const std::string& stage() const { return stage_; }
  const std::string& clip_id() const { return clip_id_; }

 private:
  std::string stage_;
  std::string clip_id_;
};

// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
// handed out dynamically; callers must write results to per-index slots.
// The first exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

// Derives an independent 64-bit seed for stream `index` of `master`
// (splitmix64 finalizer). Used wherever parallel and serial runs must agree.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

// Minimal leveled logging to stderr.
enum class LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };
void set_log_level(LogLevel level);
LogLevel log_level();
void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace birdfl

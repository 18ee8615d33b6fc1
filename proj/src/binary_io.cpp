#include "binary_io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace birdfl::detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(tid) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace birdfl::detail

#include "lifas/common.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace lifas {

namespace {

std::atomic<int> g_thread_limit{0};  // 0 = default policy

int env_thread_cap() {
  static const int cap = [] {
    const char* s = std::getenv("LIFAS_THREADS");
    if (!s) return 0;
    const int v = std::atoi(s);
    return v > 0 ? v : 0;
  }();
  return cap;
}

}  // namespace

int thread_limit() {
  const int forced = g_thread_limit.load(std::memory_order_relaxed);
  if (forced > 0) return forced;
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  const int cap = env_thread_cap();
  if (cap > 0 && cap < n) n = cap;
  return n;
}

void set_thread_limit(int n) { g_thread_limit.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void parallel_for(Index n, const std::function<void(Index)>& body) {
  if (n <= 0) return;
  const int nthreads = static_cast<int>(std::min<Index>(thread_limit(), n));
  if (nthreads <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto run_range = [&](Index begin, Index end) {
    try {
      for (Index i = begin; i < end; ++i) body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(nthreads) - 1);
  const Index chunk = (n + nthreads - 1) / nthreads;
  for (int t = 1; t < nthreads; ++t) {
    const Index begin = t * chunk;
    if (begin >= n) break;
    workers.emplace_back(run_range, begin, std::min<Index>(begin + chunk, n));
  }
  run_range(0, std::min<Index>(chunk, n));
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Error::Code::io, "cannot open for writing: " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(Error::Code::io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Error::Code::io, "rename to " + path.string() + " failed");
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Code::io, "cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw Error(Error::Code::io, "read failed: " + path.string());
  return bytes;
}

}  // namespace lifas

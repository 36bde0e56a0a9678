#include "services/result_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include <spdlog/spdlog.h>

#include "common/error.hpp"

namespace nilm::services {

bool valid_household_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '.' || c == '_' || c == '-';
  });
}

ResultStore::ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create result directory " + dir_.string() + ": " + ec.message());
  auto probe = dir_ / (".probe." + std::to_string(::getpid()));
  int fd = ::open(probe.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("result directory " + dir_.string() + " is not writable: " + std::strerror(errno));
  ::close(fd);
  std::filesystem::remove(probe, ec);
}

std::filesystem::path ResultStore::file_for(const std::string& household_id) const {
  if (!valid_household_id(household_id)) throw InvalidInput("invalid household id '" + household_id + "'");
  return dir_ / (household_id + ".jsonl");
}

ResultStore::HouseholdCache& ResultStore::refresh(const std::string& household_id) {
  auto path = file_for(household_id);
  auto& cache = cache_[household_id];
  std::ifstream in(path, std::ios::binary);
  if (!in) return cache;
  in.seekg(static_cast<std::streamoff>(cache.offset));
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // partial line still being written
    cache.offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      auto rec = record_from_json(nlohmann::json::parse(line));
      auto& last = cache.last_ts.try_emplace(rec.producer, rec.ts_ms).first->second;
      last = std::max(last, rec.ts_ms);
      cache.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      spdlog::warn("skipping unreadable line in {}: {}", path.string(), e.what());
    }
  }
  return cache;
}

std::size_t ResultStore::append(const std::vector<ResultRecord>& records) {
  std::lock_guard lock(mu_);
  std::map<std::string, std::string> batches;
  std::map<std::string, std::vector<const ResultRecord*>> accepted;
  std::map<std::pair<std::string, std::string>, std::int64_t> horizon;
  for (const auto& r : records) {
    auto& cache = refresh(r.household_id);
    auto key = std::make_pair(r.household_id, r.producer);
    auto h = horizon.find(key);
    if (h == horizon.end()) {
      auto it = cache.last_ts.find(r.producer);
      h = horizon.emplace(key, it == cache.last_ts.end() ? INT64_MIN : it->second).first;
    }
    if (r.ts_ms <= h->second) continue;
    h->second = r.ts_ms;
    batches[r.household_id] += to_json(r).dump() + "\n";
    accepted[r.household_id].push_back(&r);
  }
  std::size_t written = 0;
  for (const auto& [household, text] : batches) {
    auto path = file_for(household);
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < text.size()) {
      auto n = ::write(fd, text.data() + off, text.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        int err = errno;
        ::close(fd);
        throw IoError("write to " + path.string() + " failed: " + std::strerror(err));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
      int err = errno;
      ::close(fd);
      throw IoError("fsync of " + path.string() + " failed: " + std::strerror(err));
    }
    ::close(fd);
    written += accepted[household].size();
    refresh(household);
  }
  return written;
}

std::vector<ResultRecord> ResultStore::query(const std::string& household_id, std::int64_t from, std::int64_t to,
                                             const std::string& producer) {
  std::lock_guard lock(mu_);
  const auto& cache = refresh(household_id);
  std::vector<ResultRecord> out;
  if (from > to) return out;
  for (const auto& r : cache.records)
    if (r.ts_ms >= from && r.ts_ms <= to && (producer.empty() || r.producer == producer)) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ts_ms < b.ts_ms; });
  return out;
}

std::optional<ResultRecord> ResultStore::latest(const std::string& household_id, const std::string& producer) {
  std::lock_guard lock(mu_);
  const auto& cache = refresh(household_id);
  const ResultRecord* best = nullptr;
  for (const auto& r : cache.records)
    if (r.producer == producer && (!best || r.ts_ms >= best->ts_ms)) best = &r;
  if (!best) return std::nullopt;
  return *best;
}

}  // namespace nilm::services

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "services/record.hpp"

namespace nilm::services {

/// Append-only JSON-lines store, one file per household. Other processes
/// may append to the same directory; readers pick up new complete lines on
/// every query.
class ResultStore {
 public:
  /// Creates the directory and checks it is writable; throws IoError.
  explicit ResultStore(std::filesystem::path dir);

  /// Appends, flushes and fsyncs before returning. A record whose ts_ms is
  /// not newer than the last stored one for its (household, producer) is
  /// skipped, which makes replays idempotent. Returns the number written.
  std::size_t append(const std::vector<ResultRecord>& records);

  /// Records with from <= ts_ms <= to in timestamp order.
  std::vector<ResultRecord> query(const std::string& household_id, std::int64_t from, std::int64_t to,
                                  const std::string& producer = {});
  std::optional<ResultRecord> latest(const std::string& household_id, const std::string& producer);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path file_for(const std::string& household_id) const;

 private:
  struct HouseholdCache {
    std::uint64_t offset = 0;
    std::vector<ResultRecord> records;  // file order
    std::map<std::string, std::int64_t> last_ts;
  };
  HouseholdCache& refresh(const std::string& household_id);

  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, HouseholdCache> cache_;
};

/// Household ids become file names; anything outside [A-Za-z0-9._-] is rejected.
bool valid_household_id(const std::string& id);

}  // namespace nilm::services

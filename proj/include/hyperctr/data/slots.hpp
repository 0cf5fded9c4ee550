#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "hyperctr/data/records.hpp"

namespace hyperctr {

inline constexpr std::int64_t kSecondsPerDay = 86'400;
inline constexpr std::int64_t kSecondsPerMonth = 30 * kSecondsPerDay;

// Half-open window [start, end) holding indices into the partitioned record list.
struct TimeSlot {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<std::size_t> records;
};

struct SlotPartition {
  std::int64_t granularity = 0;
  std::int64_t origin = 0;
  std::vector<TimeSlot> slots;

  std::size_t slot_of(std::int64_t timestamp) const {
    if (slots.empty() || timestamp < origin) throw ContractError("timestamp before partition origin");
    const auto k = static_cast<std::size_t>((timestamp - origin) / granularity);
    if (k >= slots.size()) throw ContractError("timestamp after partition end");
    return k;
  }
};

// Tiles [min_ts, max_ts] with consecutive windows of width `granularity`
// anchored at the earliest timestamp. Empty windows in between are kept.
inline SlotPartition partition_slots(std::span<const InteractionRecord> records, std::int64_t granularity) {
  if (granularity <= 0) throw ContractError("slot granularity must be positive");
  SlotPartition p;
  p.granularity = granularity;
  if (records.empty()) return p;
  std::int64_t lo = records.front().timestamp;
  std::int64_t hi = lo;
  for (const auto& r : records) {
    lo = std::min(lo, r.timestamp);
    hi = std::max(hi, r.timestamp);
  }
  p.origin = lo;
  const auto count = static_cast<std::size_t>((hi - lo) / granularity) + 1;
  p.slots.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    p.slots[k].start = lo + static_cast<std::int64_t>(k) * granularity;
    p.slots[k].end = p.slots[k].start + granularity;
  }
  for (std::size_t i = 0; i < records.size(); ++i) p.slots[p.slot_of(records[i].timestamp)].records.push_back(i);
  return p;
}

// A user's item sequence inside one slot: real items first in timestamp
// order, then pad positions (item -1, pad flag 1) up to the cap.
struct SlotSequence {
  std::uint32_t user = 0;
  std::size_t slot = 0;
  std::vector<long> items;
  std::vector<std::uint8_t> pad;
  std::size_t length = 0;
  long current_item = -1;

  std::size_t capacity() const { return items.size(); }
};

inline SlotSequence make_sequence(std::uint32_t user, std::size_t slot, std::span<const std::uint32_t> ordered_items,
                                  std::size_t cap) {
  SlotSequence s;
  s.user = user;
  s.slot = slot;
  s.items.assign(cap, -1);
  s.pad.assign(cap, 1);
  const std::size_t take = std::min(cap, ordered_items.size());
  const std::size_t first = ordered_items.size() - take;
  for (std::size_t k = 0; k < take; ++k) {
    s.items[k] = ordered_items[first + k];
    s.pad[k] = 0;
  }
  s.length = take;
  s.current_item = take == 0 ? -1 : s.items[take - 1];
  return s;
}

// Timestamp-ordered item lists per (slot, user), built from whichever records
// the caller considers behaviour (e.g. training clicks).
class SlotHistory {
 public:
  SlotHistory(const SlotPartition& partition, std::span<const InteractionRecord> records,
              const std::vector<std::uint8_t>* include = nullptr)
      : per_slot_(partition.slots.size()) {
    for (std::size_t k = 0; k < partition.slots.size(); ++k) {
      std::vector<std::size_t> idx;
      for (std::size_t r : partition.slots[k].records) {
        if (include == nullptr || (*include)[r]) idx.push_back(r);
      }
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
      for (std::size_t r : idx) per_slot_[k][records[r].user].push_back(records[r].item);
    }
  }

  std::size_t num_slots() const { return per_slot_.size(); }

  const std::map<std::uint32_t, std::vector<std::uint32_t>>& users_in(std::size_t slot) const { return per_slot_.at(slot); }

  std::span<const std::uint32_t> items(std::uint32_t user, std::size_t slot) const {
    const auto& m = per_slot_.at(slot);
    auto it = m.find(user);
    if (it == m.end()) return {};
    return it->second;
  }

  // Most recent `cap` items, skipping occurrences of `exclude_item` (-1 keeps all).
  SlotSequence sequence(std::uint32_t user, std::size_t slot, std::size_t cap, long exclude_item = -1) const {
    auto all = items(user, slot);
    if (exclude_item < 0) return make_sequence(user, slot, all, cap);
    std::vector<std::uint32_t> kept;
    kept.reserve(all.size());
    for (auto i : all) {
      if (static_cast<long>(i) != exclude_item) kept.push_back(i);
    }
    return make_sequence(user, slot, kept, cap);
  }

 private:
  std::vector<std::map<std::uint32_t, std::vector<std::uint32_t>>> per_slot_;
};

// One sequence per (user, slot) with at least one record, ordered by (slot, user).
inline std::vector<SlotSequence> build_slot_sequences(const SlotPartition& partition,
                                                      std::span<const InteractionRecord> records, std::size_t cap) {
  if (cap == 0) throw ContractError("sequence length cap must be >= 1");
  SlotHistory history(partition, records);
  std::vector<SlotSequence> out;
  for (std::size_t k = 0; k < history.num_slots(); ++k) {
    for (const auto& [user, items] : history.users_in(k)) out.push_back(make_sequence(user, k, items, cap));
  }
  return out;
}

}  // namespace hyperctr

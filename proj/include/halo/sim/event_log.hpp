#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace halo::sim {

using RankId = int;
// Simulated nanoseconds.
using SimTime = std::int64_t;

inline constexpr RankId no_peer = -1;

// One record of the global event log. `kind` must refer to a string with
// static storage duration; every producer passes literals.
struct EventRecord {
    SimTime time = 0;
    RankId rank = 0;
    std::string_view kind;
    RankId peer = no_peer;
    std::uint64_t bytes = 0;
    std::uint64_t seq = 0;
};

class EventLog {
public:
    void append(const EventRecord& r) { m_records.push_back(r); }

    // Orders by (time, rank, seq). Records are appended in processing order,
    // which is already time-ordered; the sort only fixes ties.
    void finalize();

    const std::vector<EventRecord>& records() const { return m_records; }
    std::size_t size() const { return m_records.size(); }
    bool empty() const { return m_records.empty(); }

    // `time,rank,kind,peer,bytes,seq` per line.
    void write(std::ostream& os) const;
    std::string to_string() const;
    std::uint64_t digest() const;

private:
    std::vector<EventRecord> m_records;
};

// FNV-1a, used for log and field digests.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace halo::sim

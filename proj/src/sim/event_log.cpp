#include "halo/sim/event_log.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace halo::sim {

void EventLog::finalize()
{
    std::stable_sort(m_records.begin(), m_records.end(), [](const EventRecord& a, const EventRecord& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.rank != b.rank) return a.rank < b.rank;
        return a.seq < b.seq;
    });
}

void EventLog::write(std::ostream& os) const
{
    for (const auto& r : m_records)
        os << r.time << ',' << r.rank << ',' << r.kind << ',' << r.peer << ',' << r.bytes << ',' << r.seq << '\n';
}

std::string EventLog::to_string() const
{
    std::ostringstream os;
    write(os);
    return os.str();
}

std::uint64_t EventLog::digest() const
{
    const std::string s = to_string();
    return fnv1a(s.data(), s.size());
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace halo::sim

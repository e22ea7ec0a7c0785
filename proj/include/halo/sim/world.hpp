#pragma once

#include "halo/sim/event_log.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <typeindex>
#include <vector>

namespace halo::sim {

inline constexpr RankId any_source = -2;

enum class Schedule { fifo, seeded_random, adversarial };

std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view s);

// Delivery time = base_latency + bytes * per_byte, perturbed by
// +/- jitter_fraction of that nominal value when the schedule is randomized.
struct LatencyModel {
    SimTime base_latency = 1000;
    double per_byte = 0.1;
    double jitter_fraction = 0.0;
};

struct TransportConfig {
    int n_ranks = 1;
    std::uint64_t seed = 0;
    LatencyModel latency{};
    Schedule schedule = Schedule::fifo;
    // Upper bound of the extra delay the adversarial schedule adds to each
    // message, and (divided by four) to each rank resumption.
    SimTime adversarial_spread = 20000;
    // Clock cost charged to a test()/test_any() that finds nothing complete.
    SimTime poll_cost = 50;
    // Scheduler event budget. Exceeding it is reported like a deadlock (livelock guard).
    std::uint64_t deadlock_timeout = 200'000'000;
    bool record_log = true;

    void validate() const;
};

class DeadlockError : public std::runtime_error {
public:
    DeadlockError(const std::string& what, std::vector<RankId> blocked)
        : std::runtime_error(what), m_blocked(std::move(blocked)) {}
    const std::vector<RankId>& blocked_ranks() const { return m_blocked; }

private:
    std::vector<RankId> m_blocked;
};

class RankFailure : public std::runtime_error {
public:
    RankFailure(RankId rank, const std::string& what)
        : std::runtime_error("rank " + std::to_string(rank) + ": " + what), m_rank(rank) {}
    RankId rank() const { return m_rank; }

private:
    RankId m_rank;
};

enum class MessageClass : std::uint8_t { data, control };

inline constexpr std::uint32_t user_service = 0;
inline constexpr std::uint32_t barrier_service = 1;
inline constexpr std::uint32_t rma_service = 2;

struct Message {
    RankId src = 0;
    RankId dst = 0;
    std::uint32_t service = user_service;
    int tag = 0;
    MessageClass cls = MessageClass::data;
    std::array<std::uint64_t, 4> header{};
    std::vector<std::byte> payload;
    std::string_view send_kind = "send";
    std::string_view deliver_kind = "deliver";
    SimTime sent_at = 0;
    SimTime deliver_at = 0;
    std::uint64_t seq = 0;
};

struct MessageCounters {
    std::uint64_t data_msgs = 0;
    std::uint64_t control_msgs = 0;
    std::uint64_t data_bytes = 0;
    std::uint64_t control_bytes = 0;
};

enum class RequestKind { send, recv, ibarrier };

namespace detail {
struct RequestState;
class World;
} // namespace detail

// Handle to a nonblocking operation. Copies share state; wait/test consume it.
class Request {
public:
    Request() = default;

    bool valid() const { return static_cast<bool>(m_state); }
    RequestKind kind() const;
    bool complete() const;
    bool consumed() const;
    RankId source() const;
    int tag() const;
    const std::vector<std::byte>& payload() const;

private:
    friend class Comm;
    friend class detail::World;
    explicit Request(std::shared_ptr<detail::RequestState> s) : m_state(std::move(s)) {}
    std::shared_ptr<detail::RequestState> m_state;
};

struct Status {
    RankId source = no_peer;
    int tag = 0;
    std::size_t bytes = 0;
};

// World-wide objects shared by layered protocols (e.g. the RMA registry and
// its visibility ledger). Only touched while holding the scheduler baton.
class SharedServices {
public:
    template <class T>
    T& get_or_create()
    {
        auto& slot = m_objects[std::type_index(typeid(T))];
        if (!slot) slot = std::make_shared<T>();
        return *static_cast<T*>(slot.get());
    }

    template <class T>
    const T* find() const
    {
        auto it = m_objects.find(std::type_index(typeid(T)));
        return it == m_objects.end() ? nullptr : static_cast<const T*>(it->second.get());
    }

private:
    std::map<std::type_index, std::shared_ptr<void>> m_objects;
};

// Context handed to service handlers, which run when a message is delivered
// and act on behalf of the destination rank at the delivery time.
class NodeContext {
public:
    RankId rank() const { return m_rank; }
    SimTime now() const { return m_now; }
    void transmit(Message m);
    std::uint64_t record(std::string_view kind, RankId peer, std::uint64_t bytes);
    SharedServices& services();

private:
    friend class detail::World;
    NodeContext(detail::World& w, RankId r, SimTime now) : m_world(&w), m_rank(r), m_now(now) {}
    detail::World* m_world;
    RankId m_rank;
    SimTime m_now;
};

using ServiceHandler = std::function<void(Message&, NodeContext&)>;

// Per-rank view of the world. Every communication call is a scheduling point:
// it runs only once all events earlier in simulated time have been processed.
class Comm {
public:
    RankId rank() const { return m_rank; }
    int size() const;
    SimTime now() const;
    std::uint64_t seed() const;

    // Simulated local compute.
    void advance(SimTime dt);

    Request isend(RankId dst, int tag, std::span<const std::byte> payload);
    Request irecv(RankId src, int tag);
    Status wait(Request& r);
    bool test(Request& r);
    std::optional<std::size_t> test_any(std::span<Request> rs);
    std::size_t wait_any(std::span<Request> rs);
    void wait_all(std::span<Request> rs);

    void barrier(std::span<const RankId> group);
    Request ibarrier(std::span<const RankId> group);

    // Returns the record's per-rank sequence number.
    std::uint64_t record(std::string_view kind, RankId peer = no_peer, std::uint64_t bytes = 0);
    const MessageCounters& counters() const;

    // Layered-protocol hooks.
    void register_service(std::uint32_t id, ServiceHandler handler);
    void sync_point();
    void transmit(Message m);
    void block_until(const std::function<bool()>& ready, std::string_view what);
    SharedServices& services();

private:
    friend class detail::World;
    Comm(detail::World& w, RankId r) : m_world(&w), m_rank(r) {}
    detail::World* m_world;
    RankId m_rank;
};

struct WorldResult {
    EventLog log;
    std::vector<MessageCounters> counters;
    std::vector<SimTime> finish_times;
    std::shared_ptr<SharedServices> services;
    std::uint64_t events_processed = 0;
};

// Runs `program` once per rank to completion. Throws DeadlockError when every
// unfinished rank is blocked and nothing is in flight, RankFailure when a rank
// throws.
WorldResult spawn_world(const TransportConfig& config, const std::function<void(Comm&)>& program);

} // namespace halo::sim

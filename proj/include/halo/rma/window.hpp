#pragma once

#include "halo/rma/interval_map.hpp"
#include "halo/rma/ledger.hpp"
#include "halo/sim/world.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace halo::rma {

using sim::Comm;
using sim::SimTime;

class RmaError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class MemoryModel { separate, unified };

std::string_view to_string(MemoryModel m);
MemoryModel parse_memory_model(std::string_view s);

enum class LockMode { shared, exclusive };

struct Assertions {
    bool noprecede = false;
    bool nosucceed = false;
    bool noput = false;
    bool nocheck = false;

    static Assertions none() { return {}; }
    static Assertions precede_free() { return {.noprecede = true}; }
    static Assertions succeed_free() { return {.nosucceed = true}; }
    static Assertions no_check() { return {.nocheck = true}; }
};

struct RmaConfig {
    MemoryModel memory_model = MemoryModel::separate;
    // Assertions are hints; only when honoured does a noprecede fence skip
    // synchronising with the group.
    bool honor_assertions = false;
    bool start_blocks_for_post = false;
    bool locks_enabled = true;
};

// Zero-initialised, fixed-length memory for a window.
class Region {
public:
    Region() = default;
    std::uint64_t id() const { return m_id; }
    std::size_t size() const { return m_bytes.size(); }
    std::span<std::byte> bytes() { return m_bytes; }
    std::span<const std::byte> bytes() const { return m_bytes; }

private:
    friend Region alloc_region(Comm&, std::size_t);
    std::uint64_t m_id = 0;
    std::vector<std::byte> m_bytes;
};

Region alloc_region(Comm& comm, std::size_t bytes);

struct WriteStamp {
    RankId writer = sim::no_peer;
    std::uint64_t generation = 0;
    bool operator==(const WriteStamp&) const = default;
};

namespace detail {
struct WindowState;
}

// Rank-local handle to one window of a collectively created set.
class Window {
public:
    Window() = default;
    Window(Window&&) noexcept = default;
    Window& operator=(Window&&) noexcept = default;

    bool valid() const { return static_cast<bool>(m_state); }
    std::uint64_t id() const;
    const std::vector<RankId>& group() const;
    std::size_t size() const;
    MemoryModel memory_model() const;

    // Generation stamped onto subsequent writes and expected by subsequent reads.
    void set_generation(std::uint64_t g);
    std::uint64_t generation() const;

    void put(RankId target, std::size_t target_offset, std::span<const std::byte> payload);
    void get(RankId target, std::size_t target_offset, std::span<std::byte> local_dest);

    void fence(Assertions asserts = {});

    void post(std::span<const RankId> group);
    void start(std::span<const RankId> group);
    void complete();
    void wait_exposure();

    void lock_all(Assertions asserts = {}, LockMode mode = LockMode::shared);
    void unlock_all();
    void flush_all();
    void sync();

    // Owner access to the private copy. Reads are checked by the ledger.
    void local_write(std::size_t offset, std::span<const std::byte> bytes);
    std::span<const std::byte> read_view(std::size_t offset, std::size_t len);
    // Unchecked raw access for inspection and for packing into exposed memory.
    std::span<std::byte> private_bytes();
    std::span<const std::byte> public_bytes() const;

    bool fence_epoch_open() const;
    bool access_epoch_open() const;
    bool exposure_epoch_open() const;
    bool passive_epoch_open() const;
    bool any_epoch_open() const;

    // Collective over the group; the handle is invalid afterwards.
    void free();

private:
    friend Window win_create(Comm&, Region, std::span<const RankId>, const RmaConfig&);
    Window(Comm& comm, std::shared_ptr<detail::WindowState> s) : m_comm(&comm), m_state(std::move(s)) {}
    detail::WindowState& state() const;
    void merge();

    Comm* m_comm = nullptr;
    std::shared_ptr<detail::WindowState> m_state;
};

// Collective over `group`, which must contain the caller and be symmetric
// (every member lists the caller). Asymmetric groups never complete.
Window win_create(Comm& comm, Region region, std::span<const RankId> group, const RmaConfig& cfg = {});

} // namespace halo::rma

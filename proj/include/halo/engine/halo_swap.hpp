#pragma once

#include "halo/engine/decomposition.hpp"
#include "halo/rma/window.hpp"
#include "halo/sim/world.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace halo::engine {

using sim::Comm;
using sim::SimTime;

enum class Backend { p2p, fence, pscw, passive };
std::string_view to_string(Backend b);
Backend parse_backend(std::string_view s);

// adopted: lock_all(nocheck) once, flush_all plus empty notification messages.
// simple: lock/unlock every swap and a nonblocking barrier for notification.
enum class PassiveVariant { adopted, simple };
std::string_view to_string(PassiveVariant v);
PassiveVariant parse_passive_variant(std::string_view s);

// get is a validator mode for the fence backend only.
enum class Driver { put, get };

// copy_out copies each received region into a fresh buffer before unpacking.
enum class UnpackPath { zero_copy, copy_out };

struct HaloOptions {
    Backend backend = Backend::fence;
    rma::RmaConfig rma{};
    PassiveVariant passive_variant = PassiveVariant::adopted;
    // Open the next epoch at the end of complete (and once in init) rather than in initiate.
    bool epoch_shift = true;
    Driver driver = Driver::put;
    UnpackPath unpack_path = UnpackPath::zero_copy;
    bool suppress_win_sync = false;
    // Cross-validates exchanged offsets and bounds-checks view reads.
    bool debug = true;
    int context_id = 0;
};

class HaloError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Bytes one neighbour delivered for one field. Valid until the next initiate.
class ReceiveView {
public:
    std::size_t offset() const { return m_offset; }
    std::size_t size() const { return m_bytes.size(); }
    Direction neighbor() const { return m_neighbor; }
    int field() const { return m_field; }
    bool valid() const { return m_token && *m_token == m_epoch; }

    std::span<const std::byte> bytes() const;
    // Bounds-checked sub-range.
    std::span<const std::byte> read(std::size_t offset, std::size_t len) const;

private:
    friend class HaloSwapContext;
    std::span<const std::byte> m_bytes;
    std::size_t m_offset = 0;
    Direction m_neighbor = Direction::xm;
    int m_field = 0;
    std::shared_ptr<const std::uint64_t> m_token;
    std::uint64_t m_epoch = 0;
    bool m_checked = true;
};

using Packer = std::function<void(Direction, int field, std::span<std::byte> dest)>;
using Unpacker = std::function<void(Direction, int field, const ReceiveView& view)>;

class HaloSwapContext {
public:
    HaloSwapContext(HaloSwapContext&&) noexcept = default;
    HaloSwapContext& operator=(HaloSwapContext&&) noexcept = default;

    void initiate(const Packer& pack);
    void complete(const Unpacker& unpack);
    void finalise();

    // Per-field views of a neighbour's incoming region, back to back.
    std::vector<ReceiveView> subbuffer_views(Direction d) const;

    const HaloOptions& options() const { return m_opts; }
    const NeighborTable& neighbors() const { return m_table; }
    const std::vector<FieldDescriptor>& fields() const { return m_fields; }
    const std::array<std::size_t, n_directions>& region_sizes() const { return m_region; }
    const std::array<std::size_t, n_directions>& incoming_offsets() const { return m_incoming; }
    const std::array<std::size_t, n_directions>& remote_offsets() const { return m_remote; }
    std::size_t buffer_size() const { return m_buffer_size; }
    const std::vector<RankId>& window_group() const { return m_group; }
    std::uint64_t generation() const { return m_generation; }
    bool epoch_open() const;
    bool in_flight() const { return m_in_flight; }
    bool finalised() const { return m_finalised; }
    // Receive-side buffers allocated by the unpack path so far.
    std::uint64_t allocations() const { return m_allocations; }
    rma::Window* window() { return m_window.valid() ? &m_window : nullptr; }

    // Neighbour table, region sizes and both offset tables as text.
    std::string debug_dump() const;

private:
    friend HaloSwapContext init_halo_communication(Comm&, const DecompositionPlan&, std::vector<FieldDescriptor>, const HaloOptions&);
    HaloSwapContext(Comm& comm, const DecompositionPlan& plan, std::vector<FieldDescriptor> fields, const HaloOptions& opts);

    void exchange_offsets();
    void open_epoch();
    void unpack_direction(Direction d, const Unpacker& unpack);
    ReceiveView make_view(std::span<const std::byte> bytes, std::size_t offset, Direction d, int field) const;
    std::span<const std::byte> incoming_bytes(Direction d, std::size_t offset, std::size_t len);
    void check_usable(const char* what) const;
    int tag(int block, Direction d) const { return m_opts.context_id * 64 + block * 16 + static_cast<int>(d); }

    Comm* m_comm = nullptr;
    DecompositionPlan m_plan;
    std::vector<FieldDescriptor> m_fields;
    HaloOptions m_opts;
    NeighborTable m_table;
    std::vector<RankId> m_group;      // window group: distinct neighbours and self
    std::vector<RankId> m_neighbours; // distinct neighbours
    std::array<std::vector<std::size_t>, n_directions> m_field_bytes;
    std::array<std::size_t, n_directions> m_region{};
    std::array<std::size_t, n_directions> m_incoming{};
    std::array<std::size_t, n_directions> m_remote{};
    std::array<std::size_t, n_directions> m_remote_outgoing{};
    std::size_t m_buffer_size = 0;

    rma::Window m_window;
    std::array<std::vector<std::byte>, n_directions> m_staging;
    std::array<std::vector<std::byte>, n_directions> m_get_staging;
    std::vector<sim::Request> m_recvs;
    std::vector<sim::Request> m_sends;
    std::vector<sim::Request> m_notifications;
    std::vector<Direction> m_notification_dirs;
    std::vector<std::vector<std::byte>> m_copies;

    std::uint64_t m_generation = 0;
    bool m_in_flight = false;
    bool m_finalised = false;
    std::uint64_t m_allocations = 0;
    std::shared_ptr<std::uint64_t> m_view_token = std::make_shared<std::uint64_t>(0);
};

HaloSwapContext init_halo_communication(Comm& comm, const DecompositionPlan& plan, std::vector<FieldDescriptor> fields,
                                        const HaloOptions& opts = {});
void initiate_nonblocking_halo_swap(HaloSwapContext& ctx, const Packer& pack);
void complete_nonblocking_halo_swap(HaloSwapContext& ctx, const Unpacker& unpack);
void finalise_halo_communication(HaloSwapContext& ctx);

} // namespace halo::engine

#include "halo/engine/halo_swap.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace halo::engine {

std::string_view to_string(Backend b)
{
    switch (b) {
    case Backend::p2p: return "p2p";
    case Backend::fence: return "fence";
    case Backend::pscw: return "pscw";
    case Backend::passive: return "passive";
    }
    return "?";
}

Backend parse_backend(std::string_view s)
{
    for (auto b : {Backend::p2p, Backend::fence, Backend::pscw, Backend::passive})
        if (s == to_string(b)) return b;
    throw std::invalid_argument("unknown backend: " + std::string(s));
}

std::string_view to_string(PassiveVariant v) { return v == PassiveVariant::adopted ? "adopted" : "simple"; }

PassiveVariant parse_passive_variant(std::string_view s)
{
    if (s == "adopted") return PassiveVariant::adopted;
    if (s == "simple") return PassiveVariant::simple;
    throw std::invalid_argument("unknown passive variant: " + std::string(s));
}

std::span<const std::byte> ReceiveView::bytes() const
{
    if (m_checked && !valid()) throw HaloError("receive view used after the next swap was initiated");
    return m_bytes;
}

std::span<const std::byte> ReceiveView::read(std::size_t offset, std::size_t len) const
{
    auto b = bytes();
    if (m_checked && (offset > b.size() || len > b.size() - offset))
        throw std::out_of_range("read [" + std::to_string(offset) + ", " + std::to_string(offset + len) + ") outside view of " +
                                std::to_string(b.size()) + " bytes");
    return b.subspan(offset, len);
}

namespace {

constexpr int offset_block = 0;
constexpr int notify_block = 1;
constexpr int data_block = 2;

std::vector<std::byte> words(std::initializer_list<std::uint64_t> ws)
{
    std::vector<std::byte> out(ws.size() * 8);
    std::size_t i = 0;
    for (auto w : ws) std::memcpy(out.data() + 8 * i++, &w, 8);
    return out;
}

std::uint64_t word(const std::vector<std::byte>& p, std::size_t i)
{
    std::uint64_t w = 0;
    if (p.size() >= 8 * (i + 1)) std::memcpy(&w, p.data() + 8 * i, 8);
    return w;
}

bool is_rma(Backend b) { return b != Backend::p2p; }

} // namespace

HaloSwapContext::HaloSwapContext(Comm& comm, const DecompositionPlan& plan, std::vector<FieldDescriptor> fields, const HaloOptions& opts)
    : m_comm(&comm), m_plan(plan), m_fields(std::move(fields)), m_opts(opts), m_table(neighbor_table(plan, comm.rank()))
{
    if (plan.n_ranks() != comm.size()) throw HaloError("decomposition is for " + std::to_string(plan.n_ranks()) + " ranks, world has " +
                                                       std::to_string(comm.size()));
    if (opts.driver == Driver::get && opts.backend != Backend::fence) throw HaloError("get-driven swaps are only supported by the fence backend");
    if (opts.backend == Backend::passive && !opts.rma.locks_enabled)
        throw HaloError("passive backend needs passive target synchronisation, which is disabled");
    const auto local = plan.local_dims(comm.rank());
    for (const auto& f : m_fields)
        if (!(f.local == local)) throw HaloError("field " + f.name + " dims " + to_string(f.local) + " do not match local dims " + to_string(local));

    std::size_t offset = 0;
    for (auto d : all_directions) {
        const int i = static_cast<int>(d);
        m_incoming[i] = offset;
        if (!m_table[i].present()) continue;
        for (const auto& f : m_fields) {
            const auto b = region_bytes(f, d, plan.depth);
            m_field_bytes[i].push_back(b);
            m_region[i] += b;
        }
        offset += m_region[i];
        m_neighbours.push_back(m_table[i].rank);
        m_staging[i].resize(m_region[i]);
        if (opts.driver == Driver::get) m_get_staging[i].resize(m_region[i]);
    }
    m_buffer_size = offset;
    std::sort(m_neighbours.begin(), m_neighbours.end());
    m_neighbours.erase(std::unique(m_neighbours.begin(), m_neighbours.end()), m_neighbours.end());
    m_group = m_neighbours;
    if (!std::binary_search(m_group.begin(), m_group.end(), comm.rank())) {
        m_group.push_back(comm.rank());
        std::sort(m_group.begin(), m_group.end());
    }
}

void HaloSwapContext::exchange_offsets()
{
    std::vector<sim::Request> recvs(n_directions), sends;
    const auto n_fields = static_cast<std::uint64_t>(m_fields.size());
    for (auto d : all_directions) {
        const int i = static_cast<int>(d);
        if (!m_table[i].present()) continue;
        recvs[static_cast<std::size_t>(i)] = m_comm->irecv(m_table[i].rank, tag(offset_block, d));
        const auto payload = words({m_incoming[i], m_region[i], n_fields, m_buffer_size + m_incoming[i]});
        sends.push_back(m_comm->isend(m_table[i].rank, tag(offset_block, opposite(d)), payload));
    }
    m_comm->wait_all(recvs);
    m_comm->wait_all(sends);
    for (auto d : all_directions) {
        const int i = static_cast<int>(d);
        if (!m_table[i].present()) continue;
        const auto& p = recvs[static_cast<std::size_t>(i)].payload();
        m_remote[i] = word(p, 0);
        m_remote_outgoing[i] = word(p, 3);
        if (m_opts.debug && (word(p, 1) != m_region[i] || word(p, 2) != n_fields))
            throw HaloError("neighbour " + std::to_string(m_table[i].rank) + " (" + std::string(to_string(d)) + ") expects " +
                            std::to_string(word(p, 1)) + " bytes over " + std::to_string(word(p, 2)) + " fields, this rank sends " +
                            std::to_string(m_region[i]) + " bytes over " + std::to_string(n_fields));
    }
}

void HaloSwapContext::open_epoch()
{
    switch (m_opts.backend) {
    case Backend::fence: m_window.fence(rma::Assertions::precede_free()); break;
    case Backend::pscw:
        m_window.post(m_neighbours);
        m_window.start(m_neighbours);
        break;
    default: break;
    }
}

HaloSwapContext init_halo_communication(Comm& comm, const DecompositionPlan& plan, std::vector<FieldDescriptor> fields, const HaloOptions& opts)
{
    HaloSwapContext ctx(comm, plan, std::move(fields), opts);
    ctx.exchange_offsets();
    if (is_rma(opts.backend)) {
        const auto bytes = ctx.m_buffer_size * (opts.driver == Driver::get ? 2 : 1);
        ctx.m_window = rma::win_create(comm, rma::alloc_region(comm, bytes), ctx.m_group, opts.rma);
        if (opts.backend == Backend::passive && opts.passive_variant == PassiveVariant::adopted)
            ctx.m_window.lock_all(rma::Assertions::no_check());
        else if (opts.epoch_shift && opts.driver == Driver::put)
            ctx.open_epoch();
    }
    comm.record("halo_init", sim::no_peer, ctx.m_buffer_size);
    return ctx;
}

void HaloSwapContext::check_usable(const char* what) const
{
    if (m_finalised) throw HaloError(std::string(what) + " on a finalised halo context");
}

bool HaloSwapContext::epoch_open() const
{
    if (!m_window.valid()) return false;
    switch (m_opts.backend) {
    case Backend::fence: return m_window.fence_epoch_open();
    case Backend::pscw: return m_window.access_epoch_open() && m_window.exposure_epoch_open();
    case Backend::passive: return m_window.passive_epoch_open();
    default: return false;
    }
}

void HaloSwapContext::initiate(const Packer& pack)
{
    check_usable("initiate");
    if (m_in_flight) throw HaloError("initiate called twice without complete");
    ++m_generation;
    ++*m_view_token;
    m_copies.clear();
    m_comm->record("halo_initiate", sim::no_peer, m_generation);

    if (m_opts.backend == Backend::p2p) {
        m_recvs.assign(n_directions, sim::Request{});
        m_sends.clear();
        for (auto d : all_directions) {
            const int i = static_cast<int>(d);
            if (m_table[i].present()) m_recvs[static_cast<std::size_t>(i)] = m_comm->irecv(m_table[i].rank, tag(data_block, d));
        }
    } else {
        m_window.set_generation(m_generation);
    }

    auto pack_into = [&](Direction d, std::span<std::byte> dest) {
        const int i = static_cast<int>(d);
        std::size_t off = 0;
        for (std::size_t f = 0; f < m_fields.size(); ++f) {
            pack(d, static_cast<int>(f), dest.subspan(off, m_field_bytes[i][f]));
            off += m_field_bytes[i][f];
        }
    };

    if (m_opts.driver == Driver::get) {
        // Publish outgoing data in the second half of the window, then read neighbours' copies.
        for (auto d : all_directions) {
            const int i = static_cast<int>(d);
            if (!m_table[i].present()) continue;
            pack_into(d, m_staging[i]);
            m_window.local_write(m_buffer_size + m_incoming[i], m_staging[i]);
        }
        m_window.fence(rma::Assertions::precede_free());
        for (auto d : all_directions) {
            const int i = static_cast<int>(d);
            if (m_table[i].present()) m_window.get(m_table[i].rank, m_remote_outgoing[i], m_get_staging[i]);
        }
        m_in_flight = true;
        return;
    }

    const bool passive = m_opts.backend == Backend::passive;
    if (is_rma(m_opts.backend) && !passive && !m_opts.epoch_shift) open_epoch();
    if (passive && m_opts.passive_variant == PassiveVariant::simple) m_window.lock_all();
    if (passive && m_opts.passive_variant == PassiveVariant::adopted) {
        m_notifications.clear();
        m_notification_dirs.clear();
        for (auto d : all_directions) {
            const int i = static_cast<int>(d);
            if (!m_table[i].present()) continue;
            m_notifications.push_back(m_comm->irecv(m_table[i].rank, tag(notify_block, d)));
            m_notification_dirs.push_back(d);
        }
    }

    for (auto d : all_directions) {
        const int i = static_cast<int>(d);
        if (!m_table[i].present()) continue;
        pack_into(d, m_staging[i]);
        if (m_opts.backend == Backend::p2p)
            m_sends.push_back(m_comm->isend(m_table[i].rank, tag(data_block, opposite(d)), m_staging[i]));
        else
            m_window.put(m_table[i].rank, m_remote[i], m_staging[i]);
    }
    m_in_flight = true;
}

ReceiveView HaloSwapContext::make_view(std::span<const std::byte> bytes, std::size_t offset, Direction d, int field) const
{
    ReceiveView v;
    v.m_bytes = bytes;
    v.m_offset = offset;
    v.m_neighbor = d;
    v.m_field = field;
    v.m_token = m_view_token;
    v.m_epoch = *m_view_token;
    v.m_checked = m_opts.debug;
    return v;
}

std::vector<ReceiveView> HaloSwapContext::subbuffer_views(Direction d) const
{
    const int i = static_cast<int>(d);
    if (!m_table[i].present()) throw HaloError("no neighbour in direction " + std::string(to_string(d)));
    std::vector<ReceiveView> out;
    std::size_t off = m_incoming[i];
    const bool in_window = m_window.valid() && m_opts.driver == Driver::put;
    for (std::size_t f = 0; f < m_fields.size(); ++f) {
        const auto len = m_field_bytes[i][f];
        std::span<const std::byte> bytes;
        if (in_window)
            bytes = const_cast<rma::Window&>(m_window).private_bytes().subspan(off, len);
        else if (m_opts.driver == Driver::get)
            bytes = std::span<const std::byte>(m_get_staging[i]).subspan(off - m_incoming[i], len);
        else if (!m_recvs.empty() && m_recvs[static_cast<std::size_t>(i)].valid() && m_recvs[static_cast<std::size_t>(i)].complete())
            bytes = std::span<const std::byte>(m_recvs[static_cast<std::size_t>(i)].payload()).subspan(off - m_incoming[i], len);
        out.push_back(make_view(bytes, off, d, static_cast<int>(f)));
        off += len;
    }
    return out;
}

std::span<const std::byte> HaloSwapContext::incoming_bytes(Direction d, std::size_t offset, std::size_t len)
{
    const int i = static_cast<int>(d);
    if (m_opts.backend == Backend::p2p)
        return std::span<const std::byte>(m_recvs[static_cast<std::size_t>(i)].payload()).subspan(offset - m_incoming[i], len);
    if (m_opts.driver == Driver::get) return std::span<const std::byte>(m_get_staging[i]).subspan(offset - m_incoming[i], len);
    // Ledger-checked read of the private copy.
    return m_window.read_view(offset, len);
}

void HaloSwapContext::unpack_direction(Direction d, const Unpacker& unpack)
{
    const int i = static_cast<int>(d);
    std::size_t off = m_incoming[i];
    m_comm->record("unpack", m_table[i].rank, static_cast<std::uint64_t>(i));
    for (std::size_t f = 0; f < m_fields.size(); ++f) {
        const auto len = m_field_bytes[i][f];
        auto bytes = incoming_bytes(d, off, len);
        if (m_opts.unpack_path == UnpackPath::copy_out) {
            m_copies.emplace_back(bytes.begin(), bytes.end());
            ++m_allocations;
            bytes = m_copies.back();
        }
        unpack(d, static_cast<int>(f), make_view(bytes, off, d, static_cast<int>(f)));
        off += len;
    }
}

void HaloSwapContext::complete(const Unpacker& unpack)
{
    check_usable("complete");
    if (!m_in_flight) throw HaloError("complete without initiate");
    auto unpack_all = [&] {
        for (auto d : all_directions)
            if (m_table[static_cast<int>(d)].present()) unpack_direction(d, unpack);
    };
    const bool separate = m_window.valid() && m_window.memory_model() == rma::MemoryModel::separate;
    const bool need_sync = separate && !m_opts.suppress_win_sync;

    switch (m_opts.backend) {
    case Backend::p2p:
        m_comm->wait_all(m_recvs);
        m_comm->wait_all(m_sends);
        unpack_all();
        break;
    case Backend::fence:
        m_window.fence(rma::Assertions::succeed_free());
        unpack_all();
        if (m_opts.epoch_shift && m_opts.driver == Driver::put) open_epoch();
        break;
    case Backend::pscw:
        m_window.complete();
        m_window.wait_exposure();
        unpack_all();
        if (m_opts.epoch_shift) open_epoch();
        break;
    case Backend::passive:
        if (m_opts.passive_variant == PassiveVariant::adopted) {
            m_window.flush_all();
            m_sends.clear();
            for (auto d : all_directions) {
                const int i = static_cast<int>(d);
                if (!m_table[i].present()) continue;
                m_comm->record("notify_send", m_table[i].rank, static_cast<std::uint64_t>(opposite(d)));
                m_sends.push_back(m_comm->isend(m_table[i].rank, tag(notify_block, opposite(d)), {}));
            }
            for (std::size_t left = m_notifications.size(); left > 0; --left) {
                auto idx = m_comm->test_any(m_notifications);
                if (!idx) idx = m_comm->wait_any(m_notifications);
                const auto d = m_notification_dirs[*idx];
                m_comm->record("notify_recv", m_table[static_cast<int>(d)].rank, static_cast<std::uint64_t>(d));
                if (need_sync) m_window.sync();
                unpack_direction(d, unpack);
            }
            m_comm->wait_all(m_sends);
        } else {
            m_window.unlock_all();
            std::vector<RankId> world(static_cast<std::size_t>(m_comm->size()));
            for (std::size_t r = 0; r < world.size(); ++r) world[r] = static_cast<RankId>(r);
            auto barrier = m_comm->ibarrier(world);
            m_comm->wait(barrier);
            if (need_sync) m_window.sync();
            unpack_all();
        }
        break;
    }
    m_in_flight = false;
    m_comm->record("halo_complete", sim::no_peer, m_generation);
}

void HaloSwapContext::finalise()
{
    check_usable("finalise");
    if (m_in_flight) throw HaloError("finalise with a swap in flight");
    if (m_window.valid()) {
        switch (m_opts.backend) {
        case Backend::fence:
            if (m_window.fence_epoch_open()) m_window.fence(rma::Assertions::succeed_free());
            break;
        case Backend::pscw:
            if (m_window.access_epoch_open()) m_window.complete();
            if (m_window.exposure_epoch_open()) m_window.wait_exposure();
            break;
        case Backend::passive:
            if (m_window.passive_epoch_open()) m_window.unlock_all();
            break;
        default: break;
        }
        m_window.free();
    }
    for (auto& s : m_staging) std::vector<std::byte>().swap(s);
    for (auto& s : m_get_staging) std::vector<std::byte>().swap(s);
    m_recvs.clear();
    m_copies.clear();
    ++*m_view_token;
    m_finalised = true;
    m_comm->record("halo_finalise", sim::no_peer, m_generation);
}

std::string HaloSwapContext::debug_dump() const
{
    std::ostringstream os;
    os << "halo context rank " << m_comm->rank() << " backend " << to_string(m_opts.backend) << " fields " << m_fields.size()
       << " buffer " << m_buffer_size << "\n";
    os << "dir rank kind bytes incoming_offset remote_offset\n";
    static constexpr const char* kinds[] = {"face_x", "face_y", "corner"};
    for (auto d : all_directions) {
        const int i = static_cast<int>(d);
        os << to_string(d) << ' ';
        if (m_table[i].present())
            os << m_table[i].rank;
        else
            os << '-';
        os << ' ' << kinds[static_cast<int>(m_table[i].kind)] << ' ' << m_region[i] << ' ' << m_incoming[i] << ' ' << m_remote[i] << "\n";
    }
    return os.str();
}

void initiate_nonblocking_halo_swap(HaloSwapContext& ctx, const Packer& pack) { ctx.initiate(pack); }
void complete_nonblocking_halo_swap(HaloSwapContext& ctx, const Unpacker& unpack) { ctx.complete(unpack); }
void finalise_halo_communication(HaloSwapContext& ctx) { ctx.finalise(); }

} // namespace halo::engine

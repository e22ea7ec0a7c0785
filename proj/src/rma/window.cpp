#include "halo/rma/window.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <set>
#include <tuple>

namespace halo::rma {

std::string_view to_string(MemoryModel m) { return m == MemoryModel::separate ? "separate" : "unified"; }

MemoryModel parse_memory_model(std::string_view s)
{
    if (s == "separate") return MemoryModel::separate;
    if (s == "unified") return MemoryModel::unified;
    throw std::invalid_argument("unknown memory model: " + std::string(s));
}

namespace detail {

enum class Op : std::uint64_t {
    create,
    free,
    put,
    put_ack,
    get_req,
    get_reply,
    fence,
    post,
    complete,
    lock_req,
    lock_grant,
    lock_release,
};

struct LockHolder {
    RankId origin;
    LockMode mode;
};

struct WindowState {
    RankId owner = 0;
    std::uint64_t id = 0;
    std::vector<RankId> group;
    RmaConfig cfg;
    Region region;
    std::vector<std::byte> public_copy; // unused under the unified model

    IntervalMap<WriteStamp> public_stamp;
    IntervalMap<WriteStamp> private_stamp;
    IntervalSet public_dirty;  // remote writes not yet merged into the private copy
    IntervalSet private_dirty; // local writes not yet merged into the public copy
    std::uint64_t generation = 0;

    bool fence_open = false;
    bool fence_established = false; // opened by a fence that synchronised with the group
    bool ops_in_fence = false;
    std::optional<std::vector<RankId>> access;
    std::optional<std::vector<RankId>> exposure;
    bool passive = false;
    bool passive_nocheck = false;
    LockMode passive_mode = LockMode::shared;

    std::map<RankId, std::size_t> peer_size;
    std::set<RankId> created_from;
    std::set<RankId> freed_from;
    std::map<RankId, std::uint64_t> fence_from, post_from, complete_from;
    std::map<RankId, std::uint64_t> exposure_count, access_index;
    std::uint64_t fence_syncs = 0;
    std::uint64_t fence_epochs = 0;
    std::uint64_t outstanding_puts = 0;
    std::uint64_t outstanding_gets = 0;
    std::deque<sim::Message> deferred;

    std::vector<LockHolder> holders;
    std::deque<LockHolder> lock_queue;
    std::set<RankId> grants;

    std::map<std::uint64_t, std::span<std::byte>> pending_gets;
    std::uint64_t next_get = 0;

    bool separate() const { return cfg.memory_model == MemoryModel::separate; }
    std::span<std::byte> priv() { return region.bytes(); }
    std::span<std::byte> pub() { return separate() ? std::span<std::byte>(public_copy) : region.bytes(); }
    bool in_group(RankId r) const { return std::binary_search(group.begin(), group.end(), r); }
};

struct LockView {
    RankId origin;
    LockMode mode;
    bool nocheck;
};

struct RmaRegistry {
    std::map<std::pair<RankId, std::uint64_t>, std::shared_ptr<WindowState>> windows;
    std::map<std::pair<RankId, std::uint64_t>, std::deque<sim::Message>> early;
    std::map<RankId, std::uint64_t> next_window;
    std::set<RankId> handler_registered;
    std::uint64_t next_region = 1;
    std::map<std::pair<RankId, std::uint64_t>, std::vector<LockView>> lock_view;
    VisibilityLedger ledger;
};

namespace {

RmaRegistry& registry(sim::SharedServices& s) { return s.get_or_create<RmaRegistry>(); }

struct Kinds {
    std::string_view send, deliver;
};

Kinds kinds_of(Op op)
{
    switch (op) {
    case Op::create: return {"create_notice_send", "create_notice_deliver"};
    case Op::free: return {"free_notice_send", "free_notice_deliver"};
    case Op::put: return {"put_send", "put_deliver"};
    case Op::put_ack: return {"ack_send", "ack_deliver"};
    case Op::get_req: return {"get_req_send", "get_req_deliver"};
    case Op::get_reply: return {"get_reply_send", "get_reply_deliver"};
    case Op::fence: return {"fence_notice_send", "fence_notice_deliver"};
    case Op::post: return {"post_notice_send", "post_notice_deliver"};
    case Op::complete: return {"complete_notice_send", "complete_notice_deliver"};
    case Op::lock_req: return {"lock_req_send", "lock_req_deliver"};
    case Op::lock_grant: return {"lock_grant_send", "lock_grant_deliver"};
    case Op::lock_release: return {"lock_release_send", "lock_release_deliver"};
    }
    return {"rma_send", "rma_deliver"};
}

sim::Message make_msg(const WindowState& ws, RankId dst, Op op, sim::MessageClass cls = sim::MessageClass::control)
{
    sim::Message m;
    m.src = ws.owner;
    m.dst = dst;
    m.service = sim::rma_service;
    m.cls = cls;
    m.header = {ws.id, static_cast<std::uint64_t>(op), 0, 0};
    const auto k = kinds_of(op);
    m.send_kind = k.send;
    m.deliver_kind = k.deliver;
    return m;
}

std::vector<std::byte> pack_words(std::initializer_list<std::uint64_t> words)
{
    std::vector<std::byte> out(words.size() * sizeof(std::uint64_t));
    std::size_t i = 0;
    for (auto w : words) std::memcpy(out.data() + 8 * i++, &w, sizeof w);
    return out;
}

std::uint64_t word(const std::vector<std::byte>& p, std::size_t i)
{
    std::uint64_t w = 0;
    std::memcpy(&w, p.data() + 8 * i, sizeof w);
    return w;
}

bool compatible(const WindowState& ws, LockMode mode)
{
    if (ws.holders.empty()) return true;
    if (mode == LockMode::exclusive) return false;
    return std::all_of(ws.holders.begin(), ws.holders.end(), [](const LockHolder& h) { return h.mode == LockMode::shared; });
}

template <class Ctx>
void grant(WindowState& ws, LockHolder h, Ctx& ctx)
{
    ws.holders.push_back(h);
    ctx.transmit(make_msg(ws, h.origin, Op::lock_grant));
}

template <class Ctx>
void apply_put(WindowState& ws, sim::Message& m, Ctx& ctx)
{
    const auto off = static_cast<std::size_t>(m.header[2]);
    const auto len = m.payload.size();
    std::memcpy(ws.pub().data() + off, m.payload.data(), len);
    const WriteStamp stamp{m.src, m.header[3]};
    ws.public_stamp.assign(off, off + len, stamp);
    if (ws.separate())
        ws.public_dirty.assign(off, off + len, Unit{});
    else
        ws.private_stamp.assign(off, off + len, stamp);
    ctx.transmit(make_msg(ws, m.src, Op::put_ack));
}

template <class Ctx>
void serve_get(RmaRegistry& reg, WindowState& ws, sim::Message& m, Ctx& ctx)
{
    const auto off = static_cast<std::size_t>(m.header[2]);
    const auto len = static_cast<std::size_t>(m.header[3]);
    const auto get_id = word(m.payload, 0);
    const auto expected = word(m.payload, 1);
    const auto read_seq = word(m.payload, 2);
    bool stale = false;
    ws.public_stamp.for_each(off, off + len, [&](std::size_t, std::size_t, const WriteStamp& s) {
        if (s.generation < expected) stale = true;
    });
    if (stale) reg.ledger.flag({m.src, ws.id, off, len, read_seq, "target_sync"});
    auto reply = make_msg(ws, m.src, Op::get_reply, sim::MessageClass::data);
    reply.header[2] = get_id;
    const auto src = ws.pub().subspan(off, len);
    reply.payload.assign(src.begin(), src.end());
    ctx.transmit(std::move(reply));
}

// Tag > 0: post/start access index; tag < 0: fence epoch ordinal; 0: passive.
bool must_defer(const WindowState& ws, RankId origin, int tag)
{
    if (tag == 0) return false;
    if (tag < 0) return ws.fence_epochs < static_cast<std::uint64_t>(-tag);
    auto it = ws.exposure_count.find(origin);
    return it == ws.exposure_count.end() || it->second < static_cast<std::uint64_t>(tag);
}

template <class Ctx>
void dispatch(RmaRegistry& reg, WindowState& ws, sim::Message& m, Ctx& ctx)
{
    switch (static_cast<Op>(m.header[1])) {
    case Op::create:
        ws.created_from.insert(m.src);
        ws.peer_size[m.src] = static_cast<std::size_t>(m.header[2]);
        break;
    case Op::free: ws.freed_from.insert(m.src); break;
    case Op::put:
        if (must_defer(ws, m.src, m.tag))
            ws.deferred.push_back(std::move(m));
        else
            apply_put(ws, m, ctx);
        break;
    case Op::put_ack: --ws.outstanding_puts; break;
    case Op::get_req:
        if (must_defer(ws, m.src, m.tag))
            ws.deferred.push_back(std::move(m));
        else
            serve_get(reg, ws, m, ctx);
        break;
    case Op::get_reply: {
        auto it = ws.pending_gets.find(m.header[2]);
        std::memcpy(it->second.data(), m.payload.data(), m.payload.size());
        ws.pending_gets.erase(it);
        --ws.outstanding_gets;
        break;
    }
    case Op::fence: ++ws.fence_from[m.src]; break;
    case Op::post: ++ws.post_from[m.src]; break;
    case Op::complete: ++ws.complete_from[m.src]; break;
    case Op::lock_req: {
        const LockHolder h{m.src, static_cast<LockMode>(m.header[2])};
        if (ws.lock_queue.empty() && compatible(ws, h.mode))
            grant(ws, h, ctx);
        else
            ws.lock_queue.push_back(h);
        break;
    }
    case Op::lock_grant: ws.grants.insert(m.src); break;
    case Op::lock_release: {
        auto it = std::find_if(ws.holders.begin(), ws.holders.end(), [&](const LockHolder& h) { return h.origin == m.src; });
        if (it != ws.holders.end()) ws.holders.erase(it);
        while (!ws.lock_queue.empty() && compatible(ws, ws.lock_queue.front().mode)) {
            auto next = ws.lock_queue.front();
            ws.lock_queue.pop_front();
            grant(ws, next, ctx);
        }
        break;
    }
    }
}

void drain_deferred(RmaRegistry& reg, WindowState& ws, Comm& comm)
{
    std::deque<sim::Message> still_waiting;
    while (!ws.deferred.empty()) {
        auto m = std::move(ws.deferred.front());
        ws.deferred.pop_front();
        if (must_defer(ws, m.src, m.tag))
            still_waiting.push_back(std::move(m));
        else
            dispatch(reg, ws, m, comm);
    }
    ws.deferred = std::move(still_waiting);
}

void handle(sim::Message& m, sim::NodeContext& ctx)
{
    auto& reg = registry(ctx.services());
    const std::pair key{ctx.rank(), m.header[0]};
    auto it = reg.windows.find(key);
    if (it == reg.windows.end()) {
        reg.early[key].push_back(std::move(m));
        return;
    }
    dispatch(reg, *it->second, m, ctx);
}

std::vector<RankId> normalized(std::span<const RankId> g)
{
    std::vector<RankId> out(g.begin(), g.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void note_lock(RmaRegistry& reg, const WindowState& ws, RankId target, LockMode mode, bool nocheck, std::uint64_t seq)
{
    auto& holders = reg.lock_view[{target, ws.id}];
    for (const auto& h : holders) {
        if (h.origin == ws.owner) continue;
        const bool conflict = h.mode == LockMode::exclusive || mode == LockMode::exclusive;
        if (conflict && (h.nocheck || nocheck)) {
            const auto size = target == ws.owner ? ws.region.size() : ws.peer_size.at(target);
            reg.ledger.flag({ws.owner, ws.id, 0, size, seq, "lock_conflict"});
        }
    }
    holders.push_back({ws.owner, mode, nocheck});
}

void drop_lock(RmaRegistry& reg, const WindowState& ws, RankId target)
{
    auto& holders = reg.lock_view[{target, ws.id}];
    auto it = std::find_if(holders.begin(), holders.end(), [&](const LockView& h) { return h.origin == ws.owner; });
    if (it != holders.end()) holders.erase(it);
}

} // namespace
} // namespace detail

using detail::Op;

Region alloc_region(Comm& comm, std::size_t bytes)
{
    Region r;
    r.m_id = detail::registry(comm.services()).next_region++;
    r.m_bytes.assign(bytes, std::byte{0});
    return r;
}

Window win_create(Comm& comm, Region region, std::span<const RankId> group_in, const RmaConfig& cfg)
{
    comm.sync_point();
    auto group = detail::normalized(group_in);
    if (!std::binary_search(group.begin(), group.end(), comm.rank()))
        throw RmaError("window group must contain the calling rank");
    for (auto g : group)
        if (g < 0 || g >= comm.size()) throw RmaError("window group names a rank outside the world");

    auto& reg = detail::registry(comm.services());
    auto ws = std::make_shared<detail::WindowState>();
    ws->owner = comm.rank();
    ws->id = reg.next_window[comm.rank()]++;
    ws->group = std::move(group);
    ws->cfg = cfg;
    ws->region = std::move(region);
    const auto size = ws->region.size();
    if (ws->separate()) ws->public_copy.assign(size, std::byte{0});
    ws->public_stamp.assign(0, size, WriteStamp{});
    ws->private_stamp.assign(0, size, WriteStamp{});
    ws->peer_size[comm.rank()] = size;

    const std::pair key{comm.rank(), ws->id};
    reg.windows[key] = ws;
    if (reg.handler_registered.insert(comm.rank()).second) comm.register_service(sim::rma_service, detail::handle);
    if (auto it = reg.early.find(key); it != reg.early.end()) {
        auto early = std::move(it->second);
        reg.early.erase(it);
        for (auto& m : early) detail::dispatch(reg, *ws, m, comm);
    }

    comm.record("win_create_enter", sim::no_peer, ws->id);
    for (auto peer : ws->group) {
        if (peer == comm.rank()) continue;
        auto m = detail::make_msg(*ws, peer, Op::create);
        m.header[2] = size;
        comm.transmit(std::move(m));
    }
    auto* raw = ws.get();
    comm.block_until([raw] { return raw->created_from.size() + 1 == raw->group.size(); }, "win_create");
    comm.record("win_create_exit", sim::no_peer, ws->id);
    return Window(comm, std::move(ws));
}

detail::WindowState& Window::state() const
{
    if (!m_state) throw RmaError("window used after free");
    return *m_state;
}

std::uint64_t Window::id() const { return state().id; }
const std::vector<RankId>& Window::group() const { return state().group; }
std::size_t Window::size() const { return state().region.size(); }
MemoryModel Window::memory_model() const { return state().cfg.memory_model; }
void Window::set_generation(std::uint64_t g) { state().generation = g; }
std::uint64_t Window::generation() const { return state().generation; }
bool Window::fence_epoch_open() const { return state().fence_open; }
bool Window::access_epoch_open() const { return state().access.has_value(); }
bool Window::exposure_epoch_open() const { return state().exposure.has_value(); }
bool Window::passive_epoch_open() const { return state().passive; }
bool Window::any_epoch_open() const
{
    const auto& ws = state();
    return ws.fence_open || ws.access || ws.exposure || ws.passive;
}

namespace {

std::size_t checked_target_size(const detail::WindowState& ws, RankId target, std::size_t off, std::size_t len)
{
    if (!ws.in_group(target)) throw RmaError("RMA target " + std::to_string(target) + " is not in the window group");
    const auto size = ws.peer_size.at(target);
    if (off > size || len > size - off)
        throw RmaError("RMA access [" + std::to_string(off) + ", " + std::to_string(off + len) + ") outside target region of " +
                       std::to_string(size) + " bytes");
    return size;
}

// Tag the target uses to defer ops until it has opened the matching epoch.
int epoch_tag(detail::WindowState& ws, RankId target)
{
    if (ws.passive) return 0;
    if (ws.access) {
        if (!std::binary_search(ws.access->begin(), ws.access->end(), target))
            throw RmaError("RMA operation names rank " + std::to_string(target) + " outside the start group");
        return static_cast<int>(ws.access_index[target]);
    }
    if (ws.fence_open) {
        ws.ops_in_fence = true;
        // An unsynchronised opening fence gives no guarantee the target has opened its epoch.
        return ws.fence_established ? -static_cast<int>(ws.fence_epochs) : 0;
    }
    throw RmaError("RMA operation outside access epoch");
}

} // namespace

void Window::put(RankId target, std::size_t target_offset, std::span<const std::byte> payload)
{
    auto& ws = state();
    m_comm->sync_point();
    checked_target_size(ws, target, target_offset, payload.size());
    const auto tag = epoch_tag(ws, target);
    auto m = detail::make_msg(ws, target, Op::put, sim::MessageClass::data);
    m.tag = tag;
    m.header[2] = target_offset;
    m.header[3] = ws.generation;
    m.payload.assign(payload.begin(), payload.end());
    ++ws.outstanding_puts;
    m_comm->transmit(std::move(m));
}

void Window::get(RankId target, std::size_t target_offset, std::span<std::byte> local_dest)
{
    auto& ws = state();
    m_comm->sync_point();
    checked_target_size(ws, target, target_offset, local_dest.size());
    const auto tag = epoch_tag(ws, target);
    const auto seq = m_comm->record("get_issue", target, local_dest.size());
    const auto id = ws.next_get++;
    ws.pending_gets[id] = local_dest;
    auto m = detail::make_msg(ws, target, Op::get_req);
    m.tag = tag;
    m.header[2] = target_offset;
    m.header[3] = local_dest.size();
    m.payload = detail::pack_words({id, ws.generation, seq});
    ++ws.outstanding_gets;
    m_comm->transmit(std::move(m));
}

void Window::merge()
{
    auto& ws = state();
    if (!ws.separate()) return;
    auto pub = ws.pub();
    auto priv = ws.priv();
    std::size_t merged = 0;
    ws.private_dirty.for_each([&](std::size_t b, std::size_t e, const Unit&) {
        std::memcpy(pub.data() + b, priv.data() + b, e - b);
        ws.private_stamp.for_each(b, e, [&](std::size_t sb, std::size_t se, const WriteStamp& s) { ws.public_stamp.assign(sb, se, s); });
        merged += e - b;
    });
    ws.public_dirty.for_each([&](std::size_t b, std::size_t e, const Unit&) {
        std::memcpy(priv.data() + b, pub.data() + b, e - b);
        ws.public_stamp.for_each(b, e, [&](std::size_t sb, std::size_t se, const WriteStamp& s) { ws.private_stamp.assign(sb, se, s); });
        merged += e - b;
    });
    ws.private_dirty.clear();
    ws.public_dirty.clear();
    m_comm->record("merge", sim::no_peer, merged);
    detail::registry(m_comm->services()).ledger.observe({ws.owner, ws.id, "merge", m_comm->now()});
}

void Window::fence(Assertions asserts)
{
    auto& ws = state();
    m_comm->sync_point();
    if (ws.access || ws.exposure) throw RmaError("fence called while a post/start epoch is open");
    if (ws.passive) throw RmaError("fence called while a passive-target epoch is open");
    const bool skip_sync = ws.cfg.honor_assertions && asserts.noprecede;
    if (asserts.noprecede && ws.fence_open && ws.ops_in_fence)
        throw RmaError("fence asserted noprecede but RMA operations were issued in the closing epoch");

    m_comm->record("fence_enter", sim::no_peer, ws.id);
    merge();
    auto* raw = &ws;
    if (!skip_sync) {
        const auto n = ++ws.fence_syncs;
        for (auto peer : ws.group)
            if (peer != ws.owner) m_comm->transmit(detail::make_msg(ws, peer, Op::fence));
        m_comm->block_until([raw, n] {
            if (raw->outstanding_gets != 0 || raw->outstanding_puts != 0) return false;
            for (auto peer : raw->group) {
                if (peer == raw->owner) continue;
                auto it = raw->fence_from.find(peer);
                if (it == raw->fence_from.end() || it->second < n) return false;
            }
            return true;
        }, "fence");
    } else {
        m_comm->block_until([raw] { return raw->outstanding_gets == 0 && raw->outstanding_puts == 0; }, "fence(local)");
    }
    merge();
    if (ws.fence_open) {
        m_comm->record("epoch_close", sim::no_peer, ws.id);
        ws.fence_open = false;
        ws.ops_in_fence = false;
    }
    if (!asserts.nosucceed) {
        m_comm->record("epoch_open", sim::no_peer, ws.id);
        ws.fence_open = true;
        ws.fence_established = !skip_sync;
        ++ws.fence_epochs;
        detail::drain_deferred(detail::registry(m_comm->services()), ws, *m_comm);
    }
    m_comm->record("fence_exit", sim::no_peer, ws.id);
}

void Window::post(std::span<const RankId> group_in)
{
    auto& ws = state();
    m_comm->sync_point();
    if (ws.fence_open) throw RmaError("post called inside a fence epoch");
    if (ws.exposure) throw RmaError("post called while an exposure epoch is open");
    auto group = detail::normalized(group_in);
    for (auto o : group)
        if (!ws.in_group(o)) throw RmaError("post group names a rank outside the window group");
    for (auto o : group) {
        ++ws.exposure_count[o];
        m_comm->transmit(detail::make_msg(ws, o, Op::post));
    }
    ws.exposure = std::move(group);
    m_comm->record("exposure_open", sim::no_peer, ws.id);

    // Ops that arrived ahead of this exposure epoch.
    detail::drain_deferred(detail::registry(m_comm->services()), ws, *m_comm);
}

void Window::start(std::span<const RankId> group_in)
{
    auto& ws = state();
    m_comm->sync_point();
    if (ws.fence_open) throw RmaError("start called inside a fence epoch");
    if (ws.access) throw RmaError("start called while an access epoch is open");
    if (ws.passive) throw RmaError("start called while a passive-target epoch is open");
    auto group = detail::normalized(group_in);
    for (auto t : group)
        if (!ws.in_group(t)) throw RmaError("start group names a rank outside the window group");
    for (auto t : group) ++ws.access_index[t];
    ws.access = group;
    m_comm->record("epoch_open", sim::no_peer, ws.id);
    if (ws.cfg.start_blocks_for_post) {
        auto* raw = &ws;
        m_comm->block_until([raw] {
            for (auto t : *raw->access) {
                auto it = raw->post_from.find(t);
                if (it == raw->post_from.end() || it->second < raw->access_index[t]) return false;
            }
            return true;
        }, "start");
    }
}

void Window::complete()
{
    auto& ws = state();
    m_comm->sync_point();
    if (!ws.access) throw RmaError("complete without start");
    for (auto t : *ws.access) m_comm->transmit(detail::make_msg(ws, t, Op::complete));
    // Origin-side completion only: puts are snapshotted, gets must have landed.
    auto* raw = &ws;
    m_comm->block_until([raw] { return raw->outstanding_gets == 0; }, "complete");
    ws.access.reset();
    m_comm->record("epoch_close", sim::no_peer, ws.id);
}

void Window::wait_exposure()
{
    auto& ws = state();
    m_comm->sync_point();
    if (!ws.exposure) throw RmaError("wait without post");
    m_comm->record("wait_enter", sim::no_peer, ws.id);
    auto* raw = &ws;
    m_comm->block_until([raw] {
        for (auto o : *raw->exposure) {
            auto it = raw->complete_from.find(o);
            if (it == raw->complete_from.end() || it->second < raw->exposure_count[o]) return false;
        }
        return true;
    }, "wait_exposure");
    merge();
    ws.exposure.reset();
    m_comm->record("exposure_close", sim::no_peer, ws.id);
}

void Window::lock_all(Assertions asserts, LockMode mode)
{
    auto& ws = state();
    m_comm->sync_point();
    if (!ws.cfg.locks_enabled) throw RmaError("passive target synchronisation is disabled");
    if (ws.passive) throw RmaError("lock_all while already locked");
    if (ws.fence_open || ws.access || ws.exposure) throw RmaError("lock_all while an active-target epoch is open");
    const auto seq = m_comm->record("lock_all", sim::no_peer, ws.id);
    auto& reg = detail::registry(m_comm->services());
    if (!asserts.nocheck) {
        ws.grants.clear();
        for (auto t : ws.group) {
            auto m = detail::make_msg(ws, t, Op::lock_req);
            m.header[2] = static_cast<std::uint64_t>(mode);
            m_comm->transmit(std::move(m));
        }
        auto* raw = &ws;
        m_comm->block_until([raw] { return raw->grants.size() == raw->group.size(); }, "lock_all");
    }
    for (auto t : ws.group) detail::note_lock(reg, ws, t, mode, asserts.nocheck, seq);
    ws.passive = true;
    ws.passive_nocheck = asserts.nocheck;
    ws.passive_mode = mode;
    m_comm->record("epoch_open", sim::no_peer, ws.id);
}

void Window::flush_all()
{
    auto& ws = state();
    m_comm->sync_point();
    if (!ws.passive) throw RmaError("flush without lock");
    auto* raw = &ws;
    m_comm->block_until([raw] { return raw->outstanding_puts == 0 && raw->outstanding_gets == 0; }, "flush_all");
    m_comm->record("flush_done", sim::no_peer, ws.id);
}

void Window::unlock_all()
{
    auto& ws = state();
    m_comm->sync_point();
    if (!ws.passive) throw RmaError("unlock without lock");
    auto* raw = &ws;
    m_comm->block_until([raw] { return raw->outstanding_puts == 0 && raw->outstanding_gets == 0; }, "unlock_all");
    m_comm->record("flush_done", sim::no_peer, ws.id);
    auto& reg = detail::registry(m_comm->services());
    for (auto t : ws.group) {
        if (!ws.passive_nocheck) m_comm->transmit(detail::make_msg(ws, t, Op::lock_release));
        detail::drop_lock(reg, ws, t);
    }
    ws.passive = false;
    m_comm->record("unlock_all", sim::no_peer, ws.id);
    m_comm->record("epoch_close", sim::no_peer, ws.id);
}

void Window::sync()
{
    auto& ws = state();
    m_comm->sync_point();
    m_comm->record("win_sync", sim::no_peer, ws.id);
    merge();
}

void Window::local_write(std::size_t offset, std::span<const std::byte> bytes)
{
    auto& ws = state();
    if (offset > ws.region.size() || bytes.size() > ws.region.size() - offset) throw RmaError("local write out of bounds");
    std::memcpy(ws.priv().data() + offset, bytes.data(), bytes.size());
    const WriteStamp stamp{ws.owner, ws.generation};
    ws.private_stamp.assign(offset, offset + bytes.size(), stamp);
    if (ws.separate())
        ws.private_dirty.assign(offset, offset + bytes.size(), Unit{});
    else
        ws.public_stamp.assign(offset, offset + bytes.size(), stamp);
    m_comm->record("local_write", sim::no_peer, bytes.size());
}

std::span<const std::byte> Window::read_view(std::size_t offset, std::size_t len)
{
    auto& ws = state();
    if (offset > ws.region.size() || len > ws.region.size() - offset) throw RmaError("local read out of bounds");
    const auto seq = m_comm->record("local_read", sim::no_peer, len);
    auto& reg = detail::registry(m_comm->services());
    if (ws.separate() && ws.public_dirty.intersects(offset, offset + len)) {
        reg.ledger.flag({ws.owner, ws.id, offset, len, seq, ws.passive ? "win_sync" : "merge"});
    } else {
        bool stale = false;
        ws.private_stamp.for_each(offset, offset + len, [&](std::size_t, std::size_t, const WriteStamp& s) {
            if (s.generation < ws.generation) stale = true;
        });
        if (stale) reg.ledger.flag({ws.owner, ws.id, offset, len, seq, "generation"});
    }
    return ws.priv().subspan(offset, len);
}

std::span<std::byte> Window::private_bytes() { return state().priv(); }
std::span<const std::byte> Window::public_bytes() const { return state().pub(); }

void Window::free()
{
    auto& ws = state();
    m_comm->sync_point();
    if (any_epoch_open()) throw RmaError("window freed with an open epoch");
    for (auto peer : ws.group)
        if (peer != ws.owner) m_comm->transmit(detail::make_msg(ws, peer, Op::free));
    auto* raw = &ws;
    m_comm->block_until([raw] { return raw->freed_from.size() + 1 == raw->group.size(); }, "win_free");
    detail::registry(m_comm->services()).windows.erase({ws.owner, ws.id});
    m_state.reset();
}

void write_violations(std::ostream& os, const std::vector<Violation>& vs)
{
    for (const auto& v : vs)
        os << v.rank << ',' << v.window << ',' << v.offset << ',' << v.len << ',' << v.read_seq << ',' << v.missing_sync << '\n';
}

std::vector<Violation> consistency_report(const sim::WorldResult& world)
{
    if (!world.services) return {};
    const auto* reg = world.services->find<detail::RmaRegistry>();
    return reg ? reg->ledger.violations() : std::vector<Violation>{};
}

} // namespace halo::rma

#pragma once

#include "halo/engine/decomposition.hpp"
#include "halo/engine/halo_swap.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace halo::grid {

using engine::DecompositionPlan;
using engine::Direction;
using sim::RankId;

// value = field * 2^39 + gx * 2^26 + gy * 2^13 + gz; every value is an integer below 2^53.
inline constexpr std::uint64_t c1 = std::uint64_t{1} << 26;
inline constexpr std::uint64_t c2 = std::uint64_t{1} << 13;
inline constexpr std::uint64_t c3 = std::uint64_t{1} << 39;
inline constexpr std::uint64_t sentinel_bits = 0x7FF8DEADBEEF0001ULL;

double encode(long long gx, long long gy, long long gz, int field);
double sentinel();
std::uint64_t bits_of(double v);
bool is_sentinel(double v);

class Field {
public:
    int lx() const { return m_local.x; }
    int ly() const { return m_local.y; }
    int lz() const { return m_local.z; }
    int depth() const { return m_depth; }
    int index() const { return m_field; }
    RankId rank() const { return m_rank; }
    const engine::Dims& origin() const { return m_origin; }

    // i in [0, lx + 2 depth), j in [0, ly + 2 depth), k in [0, lz).
    std::size_t offset(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(m_local.y + 2 * m_depth) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(m_local.z) +
               static_cast<std::size_t>(k);
    }
    double& at(int i, int j, int k) { return m_data[offset(i, j, k)]; }
    double at(int i, int j, int k) const { return m_data[offset(i, j, k)]; }
    std::vector<double>& data() { return m_data; }
    const std::vector<double>& data() const { return m_data; }

    engine::FieldDescriptor descriptor() const;

private:
    friend Field make_field(const DecompositionPlan&, RankId, int);
    engine::Dims m_local;
    engine::Dims m_origin;
    int m_depth = 0;
    int m_field = 0;
    RankId m_rank = 0;
    std::vector<double> m_data;
};

// Interior encoded, halos sentinel.
Field make_field(const DecompositionPlan& plan, RankId rank, int field_index);

// Number of values exchanged with the neighbour in direction d.
std::size_t halo_values(const Field& f, Direction d);

// Copies the interior cells next to d, ordered by layer, then row, then z.
void pack_halo(const Field& f, Direction d, std::span<std::byte> staging);
// Fills the halo on side d from data packed by the neighbour there.
void unpack_halo(Field& f, Direction d, std::span<const std::byte> data);
void unpack_halo(Field& f, Direction d, const engine::ReceiveView& view);

struct Mismatch {
    std::size_t index = 0;
    int i = 0, j = 0, k = 0;
    std::uint64_t expected = 0;
    std::uint64_t found = 0;
};

// Bitwise check of every cell against its encoding. Halo cells outside a
// non-periodic domain are expected to hold the sentinel.
std::vector<Mismatch> verify_halos(const Field& f, const DecompositionPlan& plan);
std::string describe(const Mismatch& m);

std::uint64_t digest(const Field& f, std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace halo::grid

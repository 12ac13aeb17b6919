#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "dsme/frame_timing.hpp"

namespace dsme {

using NodeAddr = std::uint16_t;
inline constexpr NodeAddr kBroadcastAddr = 0xFFFF;

// PHY/MAC constants, all in symbols unless noted.
inline constexpr int kMaxMacPayload = 116;  // bytes
inline constexpr int kSymbolsPerByte = 2;
inline constexpr Symbols kHeaderSymbols = 34;
inline constexpr Symbols kAifsSymbols = 12;
inline constexpr Symbols kAckFrameSymbols = 22;
inline constexpr Symbols kAckOverheadSymbols = kAifsSymbols + kAckFrameSymbols;  // S_ACK
inline constexpr Symbols kSifsSymbols = 12;
inline constexpr Symbols kLifsSymbols = 40;
inline constexpr Symbols kTurnaroundSymbols = 12;
inline constexpr Symbols kMacAckMaxWaitSymbols = 54;
inline constexpr int kMaxSifsPayload = 18;      // bytes; larger frames are followed by a LIFS
inline constexpr int kControlBodyBytes = 23;    // beacons and GTS management commands

enum class FrameKind : std::uint8_t { Data, Ack, Gack, Beacon, GtsRequest, GtsResponse, GtsNotify, GtsChange };

const char* to_string(FrameKind k);

/// Per-source record inside a group acknowledgement.
struct GackPayload {
    NodeAddr node_addr = 0;
    std::uint8_t base_seq = 0;
    std::vector<std::uint8_t> bitmap;  // 1..255 octets

    std::size_t bitmap_len() const { return bitmap.size(); }
    bool operator==(const GackPayload&) const = default;
};

struct GackBody {
    std::vector<GackPayload> payloads;
    bool operator==(const GackBody&) const = default;
};

class GackEncodeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GackDecodeError : public std::runtime_error {
public:
    enum class Kind { Truncated, CountMismatch, EmptyBitmap };
    GackDecodeError(Kind kind, const char* what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Wire layout:
///   [count:1] then per payload [addr:2 LE][bitmap_len:1][base_seq:1][bitmap:bitmap_len]
std::vector<std::uint8_t> encode_gack(const GackBody& body);
GackBody decode_gack(std::span<const std::uint8_t> octets);
std::size_t encoded_size(const GackBody& body);

/// Sequence numbers acknowledged by a payload. Bit 0 is the MSB of the first
/// bitmap octet and stands for base_seq; numbering wraps modulo 256.
std::set<std::uint8_t> acked_set(const GackPayload& p);

/// True when `seq` lies inside the window [base_seq, base_seq + 8 * bitmap_len).
bool covers(const GackPayload& p, std::uint8_t seq);

Symbols ifs_symbols(int payload_len);
Symbols data_airtime_symbols(int payload_len);
Symbols gack_airtime_symbols(const GackBody& body);
Symbols control_airtime_symbols();

// ---------------------------------------------------------------------------
// GTS bookkeeping shared by the handshake frames and the MAC.

enum class GtsDirection : std::uint8_t { Tx, Rx };
enum class GtsKind : std::uint8_t { Data, Gack };

/// One (superframe, slot, channel) cell of the CFP schedule.
struct GtsCell {
    int sf_index = 0;
    int slot_index = kFirstCfpSlot;
    int channel = 0;
    friend auto operator<=>(const GtsCell&, const GtsCell&) = default;
};

struct GtsDescriptor {
    GtsCell cell;
    GtsDirection direction = GtsDirection::Tx;
    GtsKind kind = GtsKind::Data;
    NodeAddr peer = 0;  // kBroadcastAddr for GACK slots
    bool operator==(const GtsDescriptor&) const = default;
};

enum class HandshakeOp : std::uint8_t {
    Allocate,    // request / response / notify of a new allocation
    Deallocate,  // rollback or release of an existing allocation
    Duplicate,   // a neighbour already uses the announced cell
};

enum class HandshakeStatus : std::uint8_t { Success, Denied, Aborted };

struct GtsHandshakeBody {
    std::uint32_t handshake_id = 0;
    HandshakeOp op = HandshakeOp::Allocate;
    HandshakeStatus status = HandshakeStatus::Success;
    NodeAddr initiator = 0;  // device that transmits in the data GTS
    NodeAddr responder = 0;
    bool want_gack = false;
    int avoid_sf = -1;
    std::optional<GtsCell> data_cell;
    std::optional<GtsCell> gack_cell;
    /// Requesting side's view of the schedule: its own busy (sf, slot) pairs
    /// (channel ignored) and every cell it knows to be in use nearby.
    std::vector<GtsCell> busy_times;
    std::vector<GtsCell> occupied_cells;
};

struct Frame {
    FrameKind kind = FrameKind::Data;
    NodeAddr src = 0;
    NodeAddr dst = kBroadcastAddr;
    std::uint8_t seq = 0;
    int payload_len = 0;
    std::optional<GackBody> embedded;
    std::optional<GtsHandshakeBody> handshake;
    // Simulator bookkeeping carried by data frames.
    std::uint64_t packet_uid = 0;
    NodeAddr origin = 0;
    Symbols generated_at = 0;

    bool is_broadcast() const { return dst == kBroadcastAddr; }
};

/// Throws std::invalid_argument when a frame breaks its kind's invariants.
void validate(const Frame& f);

Symbols airtime_symbols(const Frame& f);

}  // namespace dsme

#include "dsme/frames.hpp"

namespace dsme {

const char* to_string(FrameKind k) {
    switch (k) {
        case FrameKind::Data: return "data";
        case FrameKind::Ack: return "ack";
        case FrameKind::Gack: return "gack";
        case FrameKind::Beacon: return "beacon";
        case FrameKind::GtsRequest: return "gts-request";
        case FrameKind::GtsResponse: return "gts-response";
        case FrameKind::GtsNotify: return "gts-notify";
        case FrameKind::GtsChange: return "gts-change";
    }
    return "?";
}

std::size_t encoded_size(const GackBody& body) {
    std::size_t n = 1;
    for (const auto& p : body.payloads) {
        n += 4 + p.bitmap_len();
    }
    return n;
}

std::vector<std::uint8_t> encode_gack(const GackBody& body) {
    if (body.payloads.size() > 255) {
        throw GackEncodeError("GACK body holds more than 255 payloads");
    }
    std::vector<std::uint8_t> out;
    out.reserve(encoded_size(body));
    out.push_back(static_cast<std::uint8_t>(body.payloads.size()));
    for (const auto& p : body.payloads) {
        if (p.bitmap.empty() || p.bitmap.size() > 255) {
            throw GackEncodeError("bitmap length must be within 1..255 octets");
        }
        out.push_back(static_cast<std::uint8_t>(p.node_addr & 0xFF));
        out.push_back(static_cast<std::uint8_t>(p.node_addr >> 8));
        out.push_back(static_cast<std::uint8_t>(p.bitmap.size()));
        out.push_back(p.base_seq);
        out.insert(out.end(), p.bitmap.begin(), p.bitmap.end());
    }
    return out;
}

GackBody decode_gack(std::span<const std::uint8_t> octets) {
    if (octets.empty()) {
        throw GackDecodeError(GackDecodeError::Kind::Truncated, "missing payload count");
    }
    GackBody body;
    const std::size_t count = octets[0];
    body.payloads.reserve(count);
    std::size_t pos = 1;
    for (std::size_t i = 0; i < count; ++i) {
        if (pos + 4 > octets.size()) {
            throw GackDecodeError(GackDecodeError::Kind::Truncated, "payload header cut short");
        }
        GackPayload p;
        p.node_addr = static_cast<NodeAddr>(octets[pos] | (octets[pos + 1] << 8));
        const std::size_t len = octets[pos + 2];
        p.base_seq = octets[pos + 3];
        pos += 4;
        if (len == 0) {
            throw GackDecodeError(GackDecodeError::Kind::EmptyBitmap, "zero bitmap length");
        }
        if (pos + len > octets.size()) {
            throw GackDecodeError(GackDecodeError::Kind::Truncated, "bitmap cut short");
        }
        p.bitmap.assign(octets.begin() + static_cast<std::ptrdiff_t>(pos),
                        octets.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        body.payloads.push_back(std::move(p));
    }
    if (pos != octets.size()) {
        throw GackDecodeError(GackDecodeError::Kind::CountMismatch, "trailing octets after last payload");
    }
    return body;
}

std::set<std::uint8_t> acked_set(const GackPayload& p) {
    std::set<std::uint8_t> out;
    for (std::size_t i = 0; i < p.bitmap.size() * 8; ++i) {
        if (p.bitmap[i / 8] & (0x80u >> (i % 8))) {
            out.insert(static_cast<std::uint8_t>(p.base_seq + i));
        }
    }
    return out;
}

bool covers(const GackPayload& p, std::uint8_t seq) {
    const std::size_t offset = static_cast<std::uint8_t>(seq - p.base_seq);
    return offset < p.bitmap.size() * 8;
}

Symbols ifs_symbols(int payload_len) {
    return payload_len > kMaxSifsPayload ? kLifsSymbols : kSifsSymbols;
}

Symbols data_airtime_symbols(int payload_len) {
    return kHeaderSymbols + kSymbolsPerByte * payload_len;
}

Symbols gack_airtime_symbols(const GackBody& body) {
    return kHeaderSymbols + kSymbolsPerByte * static_cast<Symbols>(encoded_size(body));
}

Symbols control_airtime_symbols() {
    return kHeaderSymbols + kSymbolsPerByte * kControlBodyBytes;
}

void validate(const Frame& f) {
    if (f.payload_len < 0 || f.payload_len > kMaxMacPayload) {
        throw std::invalid_argument("payload length outside 0..116");
    }
    if (f.kind == FrameKind::Ack && f.payload_len != 0) {
        throw std::invalid_argument("ACK frames carry no payload");
    }
    if (f.kind == FrameKind::Gack && (!f.is_broadcast() || !f.embedded)) {
        throw std::invalid_argument("GACK frames are broadcast and carry a body");
    }
}

Symbols airtime_symbols(const Frame& f) {
    switch (f.kind) {
        case FrameKind::Data: return data_airtime_symbols(f.payload_len);
        case FrameKind::Ack: return kAckFrameSymbols;
        case FrameKind::Gack: return gack_airtime_symbols(f.embedded ? *f.embedded : GackBody{});
        case FrameKind::Beacon: {
            Symbols t = control_airtime_symbols();
            if (f.embedded) {
                t += kSymbolsPerByte * static_cast<Symbols>(encoded_size(*f.embedded));
            }
            return t;
        }
        case FrameKind::GtsRequest:
        case FrameKind::GtsResponse:
        case FrameKind::GtsNotify:
        case FrameKind::GtsChange: return control_airtime_symbols();
    }
    return control_airtime_symbols();
}

}  // namespace dsme

#pragma once

// Packet capture ingest (classic libpcap and a line-oriented JSON form) and
// grouping of packets into unidirectional connections.

#include <arpa/inet.h>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "malpaca/error.hpp"

namespace malpaca {

using Port = std::uint16_t;

struct PacketRecord {
  std::int64_t timestamp_us = 0;  // microseconds since epoch
  std::string src_ip;
  std::string dst_ip;
  Port src_port = 0;
  Port dst_port = 0;
  std::uint32_t ip_size = 0;  // IP datagram length in bytes
  std::string sample_id;

  double timestamp_seconds() const { return static_cast<double>(timestamp_us) * 1e-6; }
  bool operator==(const PacketRecord&) const = default;
};

enum class CaptureFormat { Pcap, Jsonl };

struct ParseIssue {
  std::size_t line = 0;  // 1-based line (jsonl) or record index (pcap)
  std::string message;
};

struct ParseReport {
  std::vector<PacketRecord> packets;
  std::size_t non_ip_skipped = 0;
  std::size_t portless = 0;  // IP packets carrying neither TCP nor UDP; ports set to 0
  std::vector<ParseIssue> malformed;
};

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint32_t load32(const std::uint8_t* p, bool swapped) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return swapped ? __builtin_bswap32(v) : v;
}

inline std::string ip_to_string(int family, const std::uint8_t* addr) {
  char buf[INET6_ADDRSTRLEN];
  if (inet_ntop(family, addr, buf, sizeof buf) == nullptr) return {};
  return buf;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::UnreadableFile, path.string());
  return bytes;
}

constexpr std::uint32_t kPcapMagicMicro = 0xa1b2c3d4;
constexpr std::uint32_t kPcapMagicNano = 0xa1b23c4d;
constexpr std::uint32_t kLinkTypeEthernet = 1;
constexpr std::size_t kPcapGlobalHeader = 24;
constexpr std::size_t kPcapRecordHeader = 16;

// Decodes one Ethernet frame. Returns false for frames without an IP layer.
inline bool decode_ethernet(const std::uint8_t* frame, std::size_t caplen, PacketRecord& out,
                            bool& has_ports) {
  if (caplen < 14) return false;
  std::size_t offset = 12;
  std::uint16_t ethertype = be16(frame + offset);
  offset += 2;
  while ((ethertype == 0x8100 || ethertype == 0x88a8) && caplen >= offset + 4) {
    ethertype = be16(frame + offset + 2);
    offset += 4;
  }
  const std::uint8_t* ip = frame + offset;
  const std::size_t avail = caplen - offset;
  std::uint8_t protocol = 0;
  std::size_t l4_offset = 0;
  bool fragment_tail = false;

  if (ethertype == 0x0800) {
    if (avail < 20 || (ip[0] >> 4) != 4) return false;
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    out.ip_size = be16(ip + 2);
    protocol = ip[9];
    fragment_tail = (be16(ip + 6) & 0x1fff) != 0;
    out.src_ip = ip_to_string(AF_INET, ip + 12);
    out.dst_ip = ip_to_string(AF_INET, ip + 16);
    l4_offset = ihl;
  } else if (ethertype == 0x86dd) {
    if (avail < 40 || (ip[0] >> 4) != 6) return false;
    out.ip_size = static_cast<std::uint32_t>(be16(ip + 4)) + 40;
    protocol = ip[6];
    out.src_ip = ip_to_string(AF_INET6, ip + 8);
    out.dst_ip = ip_to_string(AF_INET6, ip + 24);
    l4_offset = 40;
  } else {
    return false;
  }

  has_ports = false;
  out.src_port = 0;
  out.dst_port = 0;
  if ((protocol == 6 || protocol == 17) && !fragment_tail && avail >= l4_offset + 4) {
    out.src_port = be16(ip + l4_offset);
    out.dst_port = be16(ip + l4_offset + 2);
    has_ports = true;
  }
  return true;
}

}  // namespace detail

inline CaptureFormat detect_format(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? CaptureFormat::Jsonl : CaptureFormat::Pcap;
}

inline ParseReport parse_pcap(const std::filesystem::path& path) {
  using namespace detail;
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < kPcapGlobalHeader)
    throw Error(ErrorCode::MalformedHeader, path.string() + ": truncated global header");

  std::uint32_t magic;
  std::memcpy(&magic, bytes.data(), 4);
  bool swapped = false;
  bool nanos = false;
  if (magic == kPcapMagicMicro || magic == kPcapMagicNano) {
    nanos = magic == kPcapMagicNano;
  } else if (__builtin_bswap32(magic) == kPcapMagicMicro ||
             __builtin_bswap32(magic) == kPcapMagicNano) {
    swapped = true;
    nanos = __builtin_bswap32(magic) == kPcapMagicNano;
  } else {
    throw Error(ErrorCode::MalformedHeader,
                fmt::format("{}: bad magic number 0x{:08x}", path.string(), magic));
  }
  const std::uint32_t linktype = load32(bytes.data() + 20, swapped) & 0x0fffffff;
  if (linktype != kLinkTypeEthernet)
    throw Error(ErrorCode::MalformedHeader,
                fmt::format("{}: unsupported link type {}", path.string(), linktype));

  ParseReport report;
  const std::string sample_id = path.stem().string();
  std::size_t pos = kPcapGlobalHeader;
  std::size_t index = 0;
  while (pos < bytes.size()) {
    ++index;
    if (bytes.size() - pos < kPcapRecordHeader) {
      report.malformed.push_back({index, "truncated record header"});
      break;
    }
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::int64_t ts_sec = load32(hdr, swapped);
    const std::int64_t ts_frac = load32(hdr + 4, swapped);
    const std::uint32_t caplen = load32(hdr + 8, swapped);
    pos += kPcapRecordHeader;
    if (bytes.size() - pos < caplen) {
      report.malformed.push_back({index, "truncated packet data"});
      break;
    }
    PacketRecord rec;
    rec.timestamp_us = ts_sec * 1'000'000 + (nanos ? ts_frac / 1000 : ts_frac);
    rec.sample_id = sample_id;
    bool has_ports = false;
    if (decode_ethernet(bytes.data() + pos, caplen, rec, has_ports)) {
      if (!has_ports) ++report.portless;
      report.packets.push_back(std::move(rec));
    } else {
      ++report.non_ip_skipped;
    }
    pos += caplen;
  }
  return report;
}

inline ParseReport parse_jsonl(std::istream& in, const std::string& sample_id) {
  ParseReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      PacketRecord rec;
      const double ts = obj.at("ts").get<double>();
      if (!std::isfinite(ts) || ts < 0) throw std::invalid_argument("ts out of range");
      rec.timestamp_us = std::llround(ts * 1e6);
      rec.src_ip = obj.at("src_ip").get<std::string>();
      rec.dst_ip = obj.at("dst_ip").get<std::string>();
      const auto sp = obj.at("src_port").get<std::int64_t>();
      const auto dp = obj.at("dst_port").get<std::int64_t>();
      const auto size = obj.at("ip_size").get<std::int64_t>();
      if (sp < 0 || sp > 65535 || dp < 0 || dp > 65535)
        throw std::invalid_argument("port out of range");
      if (size < 0 || size > 0xffffffffLL) throw std::invalid_argument("ip_size out of range");
      rec.src_port = static_cast<Port>(sp);
      rec.dst_port = static_cast<Port>(dp);
      rec.ip_size = static_cast<std::uint32_t>(size);
      rec.sample_id = sample_id;
      report.packets.push_back(std::move(rec));
    } catch (const std::exception& e) {
      report.malformed.push_back({lineno, e.what()});
    }
  }
  return report;
}

inline ParseReport parse_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, path.string());
  return parse_jsonl(in, path.stem().string());
}

inline ParseReport parse_capture(const std::filesystem::path& path, CaptureFormat format) {
  return format == CaptureFormat::Pcap ? parse_pcap(path) : parse_jsonl(path);
}

inline ParseReport parse_capture(const std::filesystem::path& path) {
  return parse_capture(path, detect_format(path));
}

// Writes packets in the jsonl capture format. Timestamps keep microsecond precision.
inline void write_jsonl(std::ostream& out, const std::vector<PacketRecord>& packets) {
  for (const auto& p : packets) {
    out << fmt::format(
        "{{\"ts\":{}.{:06d},\"src_ip\":{},\"dst_ip\":{},\"src_port\":{},\"dst_port\":{},"
        "\"ip_size\":{}}}\n",
        p.timestamp_us / 1'000'000, p.timestamp_us % 1'000'000, nlohmann::json(p.src_ip).dump(),
        nlohmann::json(p.dst_ip).dump(), p.src_port, p.dst_port, p.ip_size);
  }
}

// ---------------------------------------------------------------------------
// Connections

enum class Direction { Outgoing, Incoming };

inline const char* to_string(Direction d) { return d == Direction::Outgoing ? "Out" : "In"; }

struct ConnectionKey {
  std::string sample_id;
  std::string src_ip;
  std::string dst_ip;

  auto operator<=>(const ConnectionKey&) const = default;
  bool operator==(const ConnectionKey&) const = default;

  std::string str() const { return sample_id + "|" + src_ip + "->" + dst_ip; }
};

struct Connection {
  ConnectionKey key;
  Direction direction = Direction::Outgoing;
  std::vector<double> packet_sizes;   // bytes
  std::vector<double> intervals_ms;   // first entry is always 0
  std::vector<Port> src_ports;
  std::vector<Port> dst_ports;
  std::vector<std::int64_t> timestamps_us;  // truncated window only
  std::size_t original_length = 0;

  std::size_t length() const { return packet_sizes.size(); }
};

struct ExtractionStats {
  std::size_t total_packets = 0;
  std::size_t kept_connections = 0;
  std::size_t discarded_connections = 0;  // shorter than min_len
  std::size_t discarded_packets = 0;      // packets of discarded connections
  std::size_t truncated_packets = 0;      // packets beyond len in kept connections
};

struct ExtractionResult {
  std::vector<Connection> connections;  // ordered by key
  ExtractionStats stats;
};

inline ExtractionResult extract_connections(const std::vector<PacketRecord>& packets,
                                            std::size_t len, std::size_t min_len,
                                            const std::set<std::string>& localhost) {
  if (len == 0 || min_len == 0 || min_len > len)
    throw Error(ErrorCode::InvalidParams,
                fmt::format("need 1 <= min_len <= len (len={}, min_len={})", len, min_len));

  std::map<ConnectionKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const auto& p = packets[i];
    groups[ConnectionKey{p.sample_id, p.src_ip, p.dst_ip}].push_back(i);
  }

  ExtractionResult result;
  result.stats.total_packets = packets.size();
  for (auto& [key, indices] : groups) {
    if (indices.size() < min_len) {
      ++result.stats.discarded_connections;
      result.stats.discarded_packets += indices.size();
      continue;
    }
    // capture order breaks timestamp ties
    std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      return packets[a].timestamp_us < packets[b].timestamp_us;
    });
    Connection conn;
    conn.key = key;
    conn.direction = localhost.contains(key.src_ip) ? Direction::Outgoing : Direction::Incoming;
    conn.original_length = indices.size();
    const std::size_t keep = std::min(len, indices.size());
    result.stats.truncated_packets += indices.size() - keep;
    for (std::size_t j = 0; j < keep; ++j) {
      const auto& p = packets[indices[j]];
      conn.packet_sizes.push_back(static_cast<double>(p.ip_size));
      conn.intervals_ms.push_back(
          j == 0 ? 0.0 : static_cast<double>(p.timestamp_us - conn.timestamps_us.back()) / 1000.0);
      conn.src_ports.push_back(p.src_port);
      conn.dst_ports.push_back(p.dst_port);
      conn.timestamps_us.push_back(p.timestamp_us);
    }
    result.connections.push_back(std::move(conn));
  }
  result.stats.kept_connections = result.connections.size();
  return result;
}

}  // namespace malpaca

"""Builds the pcap fixtures and their expected-values CSVs.

Frames are assembled with dpkt and the expected CSV is produced by reading the
written file back with dpkt's dissector, independent of the C++ parser.
"""
import csv
import socket
import struct
from pathlib import Path

import dpkt

HERE = Path(__file__).resolve().parent


def eth(payload, ethertype):
    return dpkt.ethernet.Ethernet(src=b"\x02\x00\x00\x00\x00\x01", dst=b"\x02\x00\x00\x00\x00\x02",
                                  type=ethertype, data=payload)


def ipv4_tcp(src, dst, sport, dport, payload_len):
    tcp = dpkt.tcp.TCP(sport=sport, dport=dport, flags=dpkt.tcp.TH_ACK, data=b"x" * payload_len)
    ip = dpkt.ip.IP(src=socket.inet_aton(src), dst=socket.inet_aton(dst), p=dpkt.ip.IP_PROTO_TCP, data=tcp)
    ip.len = len(bytes(ip))
    return eth(ip, dpkt.ethernet.ETH_TYPE_IP)


def ipv6_udp(src, dst, sport, dport, payload_len):
    udp = dpkt.udp.UDP(sport=sport, dport=dport, data=b"y" * payload_len)
    udp.ulen = len(bytes(udp))
    ip6 = dpkt.ip6.IP6(src=socket.inet_pton(socket.AF_INET6, src), dst=socket.inet_pton(socket.AF_INET6, dst),
                       nxt=dpkt.ip.IP_PROTO_UDP, hlim=64, data=udp)
    ip6.plen = len(bytes(udp))
    return eth(ip6, dpkt.ethernet.ETH_TYPE_IP6)


def ipv4_icmp(src, dst):
    icmp = dpkt.icmp.ICMP(type=8, code=0, data=dpkt.icmp.ICMP.Echo(id=1, seq=1, data=b"ping"))
    ip = dpkt.ip.IP(src=socket.inet_aton(src), dst=socket.inet_aton(dst), p=dpkt.ip.IP_PROTO_ICMP, data=icmp)
    ip.len = len(bytes(ip))
    return eth(ip, dpkt.ethernet.ETH_TYPE_IP)


def arp():
    return eth(dpkt.arp.ARP(), dpkt.ethernet.ETH_TYPE_ARP)


def write_pcap(name, frames):
    with open(HERE / name, "wb") as f:
        w = dpkt.pcap.Writer(f, linktype=dpkt.pcap.DLT_EN10MB)
        for ts, frame in frames:
            w.writepkt(bytes(frame), ts=ts)


def dump_expected(name):
    rows = []
    with open(HERE / name, "rb") as f:
        for ts, buf in dpkt.pcap.Reader(f):
            e = dpkt.ethernet.Ethernet(buf)
            if isinstance(e.data, dpkt.ip.IP):
                ip = e.data
                src, dst, size = socket.inet_ntoa(ip.src), socket.inet_ntoa(ip.dst), ip.len
            elif isinstance(e.data, dpkt.ip6.IP6):
                ip = e.data
                src = socket.inet_ntop(socket.AF_INET6, ip.src)
                dst = socket.inet_ntop(socket.AF_INET6, ip.dst)
                size = ip.plen + 40
            else:
                continue
            l4 = ip.data
            sport = getattr(l4, "sport", 0) if isinstance(l4, (dpkt.tcp.TCP, dpkt.udp.UDP)) else 0
            dport = getattr(l4, "dport", 0) if isinstance(l4, (dpkt.tcp.TCP, dpkt.udp.UDP)) else 0
            rows.append([f"{ts:.6f}", src, dst, sport, dport, size])
    with open(HERE / (Path(name).stem + "_expected.csv"), "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["ts", "src_ip", "dst_ip", "src_port", "dst_port", "ip_size"])
        writer.writerows(rows)


def main():
    base = 1_700_000_000.0
    frames = []
    for i in range(10):
        frames.append((base + i * 0.125 + 0.000001 * i,
                       ipv4_tcp("10.0.0.1", "93.184.216.34", 40000 + (i % 2), 443, 17 * i + 3)))
    write_pcap("ten_tcp.pcap", frames)
    dump_expected("ten_tcp.pcap")

    mixed = [
        (base, ipv4_tcp("10.0.0.1", "8.8.8.8", 5353, 53, 10)),
        (base + 0.5, arp()),
        (base + 1.0, ipv6_udp("fe80::1", "ff02::fb", 5353, 5353, 33)),
        (base + 1.5, ipv4_icmp("10.0.0.1", "8.8.8.8")),
        (base + 2.0, ipv4_tcp("8.8.8.8", "10.0.0.1", 53, 5353, 100)),
    ]
    write_pcap("mixed.pcap", mixed)
    dump_expected("mixed.pcap")


if __name__ == "__main__":
    main()

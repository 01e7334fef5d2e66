import socket
import struct
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mesure.apdu import ApduCommand, ApduResponse, bench_command, decode_command, encode_command, PHASE_RUN
from mesure.device import SimulatedCard
from mesure.errors import BindError, ChannelClosed, DataTooLong, MalformedApdu, ProtocolViolation
from mesure.transport import ApduServer, TcpChannel, VirtualChannel, exchange, recv_frame, send_frame

from .conftest import make_profile

commands = st.builds(ApduCommand, st.integers(0, 255), st.integers(0, 255), st.integers(0, 255),
                     st.integers(0, 255), st.binary(max_size=255))


def test_encode_examples():
    assert encode_command(ApduCommand(0x80, 0x02, 0x01, 0x29)) == bytes.fromhex("80020129")
    assert encode_command(ApduCommand(0x80, 0x02, 0x01, 0x5A)) == bytes.fromhex("8002015A")
    assert encode_command(ApduCommand(0, 1, 2, 3, b"\xAA\xBB")) == bytes.fromhex("0001020302AABB")
    with pytest.raises(DataTooLong):
        ApduCommand(0x80, 0x02, 0x01, 0x29, bytes(256))


def test_decode_examples():
    assert decode_command(bytes.fromhex("80020129")) == ApduCommand(0x80, 0x02, 0x01, 0x29)
    with pytest.raises(MalformedApdu):
        decode_command(b"\x80\x02\x01")
    with pytest.raises(MalformedApdu):
        decode_command(bytes.fromhex("8002012903AABB"))
    with pytest.raises(MalformedApdu):
        decode_command(bytes.fromhex("8002012900"))


@given(commands)
def test_round_trip(cmd):
    assert decode_command(encode_command(cmd)) == cmd


def test_response_bytes():
    assert ApduResponse(b"\x01", 0x9000).to_bytes() == b"\x01\x90\x00"
    assert ApduResponse.from_bytes(b"\x6d\x00") == ApduResponse(b"", 0x6D00)
    assert not ApduResponse(sw=0x6D00).success
    with pytest.raises(MalformedApdu):
        ApduResponse.from_bytes(b"\x90")


def test_virtual_channel_elapsed_is_device_duration(small_suite):
    prof = make_profile(sadd=5_000_000 - 1_000_000 - 500 - 6000, sspush=3000)
    channel = VirtualChannel(SimulatedCard(prof, small_suite))
    ex = exchange(channel, bench_command(0x03, PHASE_RUN, 1))
    assert ex.elapsed == 5_000_000
    assert channel.now() == 5_000_000
    channel.close()
    with pytest.raises(ChannelClosed):
        channel.exchange(bench_command(0x03, PHASE_RUN, 1))


@pytest.fixture
def server(small_suite):
    srv = ApduServer(SimulatedCard(make_profile(), small_suite), "127.0.0.1:0").start()
    yield srv
    srv.shutdown()


def test_tcp_smoke(server):
    with TcpChannel(server.address) as ch:
        ex = ch.exchange(bench_command(0x01, PHASE_RUN, 1))
    assert ex.response.sw == 0x9000
    assert ex.elapsed >= 1_000_500


def test_tcp_elapsed_at_least_device_duration(small_suite):
    prof = make_profile(sadd=5_000_000 - 1_000_000 - 500 - 6000, sspush=3000)
    with ApduServer(SimulatedCard(prof, small_suite)) as srv, TcpChannel(srv.address) as ch:
        for _ in range(3):
            assert ch.exchange(bench_command(0x03, PHASE_RUN, 1)).elapsed >= 5_000_000


def test_tcp_status_words_travel_in_band(server):
    with TcpChannel(server.address) as ch:
        assert ch.exchange(bench_command(0xEE, PHASE_RUN, 1)).response.sw == 0x6D00
        assert ch.exchange(bench_command(0x01, PHASE_RUN, 0)).response.sw == 0x6A86


def test_malformed_frame_closes_only_that_connection(server):
    host, port = server.address.split(":")
    with socket.create_connection((host, int(port))) as raw:
        raw.sendall(struct.pack(">H", 3) + b"\x80\x02\x01")
        raw.settimeout(5)
        assert raw.recv(16) == b""
    with socket.create_connection((host, int(port))) as raw:
        raw.sendall(struct.pack(">H", 5000))
        raw.settimeout(5)
        assert raw.recv(16) == b""
    with TcpChannel(server.address) as ch:
        assert ch.exchange(bench_command(0x01, PHASE_RUN, 1)).response.success


def test_frame_limits():
    a, b = socket.socketpair()
    with a, b:
        with pytest.raises(ProtocolViolation):
            send_frame(a, bytes(4097))
        a.sendall(struct.pack(">H", 4097))
        with pytest.raises(ProtocolViolation):
            recv_frame(b)


def test_two_clients_are_serialized(server):
    results = {}

    def client(name):
        with TcpChannel(server.address) as ch:
            results[name] = [ch.exchange(bench_command(0x03, PHASE_RUN, 20)).elapsed for _ in range(8)]

    threads = [threading.Thread(target=client, args=(n,)) for n in "ab"]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results["a"]) == len(results["b"]) == 8
    spans = sorted((s, e) for s, e, ins in server.log if ins == 0x03)
    assert len(spans) == 16
    assert all(e1 <= s2 for (_, e1), (s2, _) in zip(spans, spans[1:]))
    device_ns = 1_000_000 + 400 * 16_500
    assert min(results["a"] + results["b"]) >= device_ns


def test_exchange_after_server_shutdown(small_suite):
    srv = ApduServer(SimulatedCard(make_profile(), small_suite)).start()
    ch = TcpChannel(srv.address)
    assert ch.exchange(bench_command(0x01, PHASE_RUN, 1)).response.success
    srv.shutdown()
    with pytest.raises(ChannelClosed):
        ch.exchange(bench_command(0x01, PHASE_RUN, 1))
    with pytest.raises(ChannelClosed):
        ch.exchange(bench_command(0x01, PHASE_RUN, 1))


def test_connect_to_dead_endpoint():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(ChannelClosed):
        TcpChannel(f"127.0.0.1:{port}", timeout=2)


def test_bind_error(server, small_suite):
    with pytest.raises(BindError):
        ApduServer(SimulatedCard(make_profile(), small_suite), server.address)

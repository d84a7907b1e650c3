"""Soak mode: sensors and the fusion center as concurrent tasks over localhost TCP.

Each sensor task connects to the FC server and sends its track sets as
length-prefixed records at (scaled) wall-clock emission times plus the
simulated transport delay. The FC stamps every record with its own receive
time and advances one slot per T_c of wall clock. Results depend on the
scheduler, so this mode is for soak testing, not for scored experiments.
"""
from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

from .fusion import FcParams, FusionCenter, Snapshot
from .geom import Pose2D
from .serialize import FrameDecoder, encode_frame, msg_from_dict, msg_to_dict
from .track import TrackSetMsg

log = logging.getLogger(__name__)


@dataclass
class LiveStats:
    sent: int = 0
    received: int = 0
    decode_errors: int = 0
    late: int = 0
    snapshots: list[Snapshot] = field(default_factory=list)


async def _sensor_task(port: int, msgs: list[TrackSetMsg], t0: float, scale: float, stats: LiveStats):
    loop = asyncio.get_running_loop()
    _, writer = await asyncio.open_connection("127.0.0.1", port)
    try:
        for m in sorted(msgs, key=lambda m: m.timestamp):
            send_at = m.arrival if m.arrival is not None else m.timestamp
            await asyncio.sleep(max(0.0, t0 + send_at / scale - loop.time()))
            writer.write(encode_frame({"type": "msg", **msg_to_dict(TrackSetMsg(m.sensor_id, m.timestamp, m.tracks))}))
            await writer.drain()
            stats.sent += 1
    finally:
        writer.close()
        await writer.wait_closed()


async def run_live(msgs: list[TrackSetMsg], poses: dict[int, Pose2D], fc_params: FcParams, duration: float,
                   time_scale: float = 1.0) -> LiveStats:
    """Stream ``msgs`` through a real socket into a wall-clock slot loop.

    ``time_scale`` > 1 runs faster than real time (scenario seconds per
    wall second).
    """
    if time_scale <= 0:
        raise ValueError("time_scale must be positive")
    loop = asyncio.get_running_loop()
    stats = LiveStats()
    fc = FusionCenter(poses=dict(poses), params=fc_params)
    t0 = loop.time() + 0.2

    def now() -> float:
        return (loop.time() - t0) * time_scale

    async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        dec = FrameDecoder()
        while chunk := await reader.read(65536):
            try:
                recs = dec.feed(chunk)
            except Exception as e:
                stats.decode_errors += 1
                log.warning("closing connection after bad frame: %s", e)
                break
            for r in recs:
                msg = msg_from_dict(r)
                msg.arrival = now()
                fc.receive(msg)
                stats.received += 1
        writer.close()

    server = await asyncio.start_server(handle, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    by_sensor: dict[int, list[TrackSetMsg]] = {}
    for m in msgs:
        if m.sensor_id in poses:
            by_sensor.setdefault(m.sensor_id, []).append(m)
    senders = [asyncio.create_task(_sensor_task(port, ms, t0, time_scale, stats)) for ms in by_sensor.values()]
    n_slots = int((duration - fc_params.tau0) / fc_params.T_c + 1e-9)
    async with server:
        for m in range(1, n_slots + 1):
            tau_m = fc_params.tau0 + m * fc_params.T_c
            await asyncio.sleep(max(0.0, t0 + tau_m / time_scale - loop.time()))
            if now() - tau_m > fc_params.T_c:
                stats.late += 1
            stats.snapshots.append(fc.step())
        await asyncio.gather(*senders, return_exceptions=True)
    return stats

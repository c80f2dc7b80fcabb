"""
Standard MIDI File reading (types 0 and 1) and a minimal type-0 writer.

Times follow the merged tempo map of all tracks. Note-on with velocity 0 is
a note-off; a note-off closes the oldest open note of the same channel and
pitch. Notes still open at the end of their track are dropped and counted
in ``score.meta["dropped_notes"]``.
"""
from __future__ import annotations

import logging
import struct

from ..errors import ParseError
from .score import NoteEvent, Score

log = logging.getLogger(__name__)

DEFAULT_TEMPO = 500_000  # microseconds per quarter note

_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= end:
            raise ParseError("truncated variable-length quantity", pos)
        b = data[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise ParseError("variable-length quantity longer than 4 bytes", pos)


def _chunks(data: bytes):
    pos = 0
    while pos < len(data):
        if pos + 8 > len(data):
            raise ParseError("truncated chunk header", pos)
        tag = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        start = pos + 8
        if start + length > len(data):
            raise ParseError(f"chunk {tag!r} runs past end of file", pos)
        yield tag, start, start + length
        pos = start + length


def _parse_track(data: bytes, start: int, end: int):
    """Yield (tick, kind, payload) for note and tempo events of one track."""
    pos, tick, status = start, 0, None
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise ParseError("event without status byte", pos)
        b = data[pos]
        if b == 0xFF:
            if pos + 1 >= end:
                raise ParseError("truncated meta event", pos)
            mtype = data[pos + 1]
            length, p = _read_vlq(data, pos + 2, end)
            if p + length > end:
                raise ParseError("meta event runs past end of track", pos)
            body = data[p:p + length]
            if mtype == 0x51:
                if length != 3:
                    raise ParseError("tempo event must carry 3 bytes", pos)
                yield tick, "tempo", int.from_bytes(body, "big")
            elif mtype == 0x03:
                yield tick, "name", body.decode("latin-1")
            elif mtype == 0x2F:
                return
            pos = p + length
            continue
        if b in (0xF0, 0xF7):
            length, p = _read_vlq(data, pos + 1, end)
            if p + length > end:
                raise ParseError("sysex event runs past end of track", pos)
            pos = p + length
            status = None
            continue
        if b & 0x80:
            if b >= 0xF0:
                raise ParseError(f"unsupported system message 0x{b:02X}", pos)
            status = b
            pos += 1
        elif status is None:
            raise ParseError("running status without a previous status byte", pos)
        kind = status & 0xF0
        n = _DATA_LEN[kind]
        if pos + n > end:
            raise ParseError("truncated channel message", pos)
        args = data[pos:pos + n]
        pos += n
        if kind == 0x90 and args[1] > 0:
            yield tick, "on", (status & 0x0F, args[0], args[1])
        elif kind == 0x80 or kind == 0x90:
            yield tick, "off", (status & 0x0F, args[0])
    raise ParseError("track ended without an end-of-track event", end)


class _TempoMap:
    def __init__(self, changes, division: int):
        self.division = division
        pts = sorted(changes, key=lambda c: c[0])
        if not pts or pts[0][0] != 0:
            pts.insert(0, (0, DEFAULT_TEMPO))
        self.ticks, self.tempos, self.seconds = [], [], []
        t_sec = 0.0
        for i, (tk, tempo) in enumerate(pts):
            if i and tk == self.ticks[-1]:
                self.tempos[-1] = tempo
                continue
            if i:
                t_sec += (tk - self.ticks[-1]) * self.tempos[-1] / (1e6 * division)
            self.ticks.append(tk)
            self.tempos.append(tempo)
            self.seconds.append(t_sec)

    def __call__(self, tick: int) -> float:
        i = 0
        while i + 1 < len(self.ticks) and self.ticks[i + 1] <= tick:
            i += 1
        return self.seconds[i] + (tick - self.ticks[i]) * self.tempos[i] / (1e6 * self.division)


def parse_midi(data: bytes) -> Score:
    """Decode an SMF byte string into a :class:`Score`."""
    data = bytes(data)
    if data[:4] != b"MThd":
        raise ParseError("missing MThd header", 0)
    chunks = list(_chunks(data))
    tag, s, e = chunks[0]
    if e - s < 6:
        raise ParseError("MThd chunk shorter than 6 bytes", 4)
    fmt, ntrks, division = struct.unpack(">HHH", data[s:s + 6])
    if fmt not in (0, 1):
        raise ParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        fps = 256 - (division >> 8)
        division = fps * (division & 0xFF)
        seconds_per_tick = 1.0 / division
    else:
        seconds_per_tick = None
    if division == 0:
        raise ParseError("division of zero ticks", 12)
    tracks = [(s0, e0) for tag, s0, e0 in chunks[1:] if tag == b"MTrk"]
    if len(tracks) != ntrks:
        raise ParseError(f"header announces {ntrks} tracks, found {len(tracks)}", 10)

    decoded = [list(_parse_track(data, s0, e0)) for s0, e0 in tracks]
    tempo_changes = [(tk, v) for evs in decoded for tk, k, v in evs if k == "tempo"]
    if seconds_per_tick is None:
        to_sec = _TempoMap(tempo_changes, division)
    else:
        to_sec = lambda tk: tk * seconds_per_tick  # noqa: E731

    notes, dropped = [], 0
    for evs in decoded:
        name = next((v for _, k, v in evs if k == "name"), "")
        open_notes: dict = {}
        for tick, kind, payload in evs:
            if kind == "on":
                ch, pitch, vel = payload
                open_notes.setdefault((ch, pitch), []).append((tick, vel))
            elif kind == "off":
                stack = open_notes.get(payload)
                if not stack:
                    continue
                t_on, vel = stack.pop(0)
                t0, t1 = to_sec(t_on), to_sec(tick)
                if t1 <= t0:
                    dropped += 1
                    continue
                notes.append(NoteEvent(t0, t1 - t0, payload[1], vel, name))
        dropped += sum(len(v) for v in open_notes.values())
    if dropped:
        log.warning("dropped %d unmatched or empty notes", dropped)
    return Score(tuple(notes), meta={"dropped_notes": dropped, "format": fmt,
                                     "division": division})


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(score: Score, ticks_per_beat: int = 480, tempo: int = DEFAULT_TEMPO,
               channel: int = 0) -> bytes:
    """Encode ``score`` as a type-0 SMF with a single tempo."""
    sec_per_tick = tempo / (1e6 * ticks_per_beat)
    msgs = []
    for e in score.events:
        on = round(e.onset_seconds / sec_per_tick)
        off = max(round(e.end_seconds / sec_per_tick), on + 1)
        msgs.append((off, 0, bytes([0x80 | channel, e.pitch, 0])))
        msgs.append((on, 1, bytes([0x90 | channel, e.pitch, max(e.velocity, 1)])))
    msgs.sort(key=lambda m: (m[0], m[1]))
    body = bytearray(b"\x00\xFF\x51\x03" + tempo.to_bytes(3, "big"))
    last = 0
    for tick, _, msg in msgs:
        body += _vlq(tick - last) + msg
        last = tick
    body += b"\x00\xFF\x2F\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_beat)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)

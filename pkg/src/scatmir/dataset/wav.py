"""RIFF/WAVE reading and writing for PCM16 and float32 audio."""
from __future__ import annotations

import struct

import numpy as np

from ..dsp import Signal
from ..errors import InvalidInputError, ParseError

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


def load_wav(data: bytes) -> Signal:
    """Decode WAV bytes to a mono float64 :class:`Signal` in [-1, 1].

    PCM16 samples map to ``v / 32768``; float32 samples are widened as is.
    Multichannel audio is averaged down to one channel.
    """
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file", 0)
    pos, fmt, payload = 12, None, None
    while pos + 8 <= len(data):
        tag = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            if tag != b"data":
                raise ParseError(f"chunk {tag!r} runs past end of file", pos)
        if tag == b"fmt ":
            if size < 16:
                raise ParseError("fmt chunk shorter than 16 bytes", pos)
            fmt = struct.unpack("<HHIIHH", body[:16]) + (body[16:],)
        elif tag == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise ParseError("missing fmt chunk", 12)
    if payload is None:
        raise ParseError("missing data chunk", 12)
    tag, channels, rate, _, block_align, bits, ext = fmt
    if tag == EXTENSIBLE:
        if len(ext) < 24:
            raise ParseError("truncated WAVE_FORMAT_EXTENSIBLE header", 12)
        tag = struct.unpack("<H", ext[8:10])[0]
    if channels < 1:
        raise ParseError("zero channels", 12)
    if tag == PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise ParseError(f"unsupported WAV format tag 0x{tag:04X} with {bits} bits", 20)
    frame = dtype.itemsize * channels
    n = len(payload) // frame
    x = np.frombuffer(payload[:n * frame], dtype=dtype).astype(np.float64) * scale
    x = x.reshape(n, channels).mean(axis=1) if channels > 1 else x
    return Signal(x, rate)


def encode_wav(signal: Signal, sample_format: str = "pcm16") -> bytes:
    """Encode a mono signal. PCM16 rounds ``x * 32768`` and clips to int16."""
    x = signal.samples
    if sample_format == "pcm16":
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = PCM, 16
    elif sample_format == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = IEEE_FLOAT, 32
    else:
        raise InvalidInputError(f"unknown sample format {sample_format!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, signal.sample_rate, signal.sample_rate * block,
                      block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav(path) -> Signal:
    with open(path, "rb") as fh:
        return load_wav(fh.read())


def write_wav(path, signal: Signal, sample_format: str = "pcm16") -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(signal, sample_format))

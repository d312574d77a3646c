"""WAV / raw PCM ingestion and overlapped framing."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, ParameterError, UnsupportedFormatError

SAMPLE_RATE = 44100

_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE

_CODEC_NAMES = {
    0x0002: "MS ADPCM",
    0x0006: "A-law",
    0x0007: "mu-law",
    0x0011: "IMA ADPCM",
    0x0055: "MPEG Layer III",
    0x00FF: "AAC",
}


@dataclass
class AudioStream:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    window_len: int = 1024
    hop: int = 128

    def __post_init__(self):
        if self.window_len <= 0 or self.hop <= 0:
            raise ParameterError("window_len and hop must be positive")
        if self.hop > self.window_len:
            raise ParameterError("hop must not exceed window_len")

    @property
    def overlap(self):
        return (self.window_len - self.hop) / self.window_len


def resample_linear(samples, src_rate, dst_rate=SAMPLE_RATE):
    """Resample by linear interpolation between neighbouring samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if src_rate == dst_rate or samples.size == 0:
        return samples
    n_out = int(round(samples.shape[0] * dst_rate / src_rate))
    t_out = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(t_out, np.arange(samples.shape[0]), samples)


class StreamResampler:
    """Chunk-by-chunk linear resampler that matches one-shot resampling.

    Output sample ``k`` sits at source position ``k * src_rate / dst_rate``;
    the last source sample of each chunk is carried so interpolation spans
    chunk boundaries.
    """

    def __init__(self, src_rate, dst_rate=SAMPLE_RATE):
        self.step = src_rate / dst_rate
        self.identity = src_rate == dst_rate
        self._prev = None
        self._consumed = 0   # source samples seen so far
        self._next = 0       # index of the next output sample

    def push(self, samples):
        samples = np.asarray(samples, dtype=np.float64)
        if self.identity or samples.size == 0:
            return samples
        if self._prev is None:
            xs, start = samples, self._consumed
        else:
            xs, start = np.concatenate([[self._prev], samples]), self._consumed - 1
        last = self._consumed + samples.size - 1
        n_out = int(np.floor(last / self.step + 1e-9)) + 1 - self._next
        t = (self._next + np.arange(max(n_out, 0))) * self.step
        out = np.interp(t - start, np.arange(xs.size), xs)
        self._next += max(n_out, 0)
        self._consumed += samples.size
        self._prev = samples[-1]
        return out


def _finalize(data, sample_rate, resample=True):
    """Downmix, clip to [-1, 1] and bring to 44100 Hz."""
    if data.ndim == 2:
        data = data.mean(axis=1)
    data = np.nan_to_num(data.astype(np.float64), nan=0.0, posinf=1.0, neginf=-1.0)
    if resample:
        data = resample_linear(data, sample_rate)
        sample_rate = SAMPLE_RATE
    return AudioStream(np.clip(data, -1.0, 1.0), sample_rate)


def decode_pcm16(raw, sample_rate=SAMPLE_RATE, channels=1, resample=True):
    """Decode interleaved signed 16-bit little-endian PCM bytes.

    With ``resample=False`` the downmixed samples keep ``sample_rate``.
    """
    if channels < 1:
        raise ParameterError("channels must be >= 1")
    frame_bytes = 2 * channels
    usable = len(raw) - len(raw) % frame_bytes
    data = np.frombuffer(raw[:usable], dtype="<i2").astype(np.float64) / 32768.0
    data = data.reshape(-1, channels)
    if channels == 1:
        data = data[:, 0]
    return _finalize(data, sample_rate, resample)


def decode_wav(data):
    """Decode a RIFF/WAVE byte string into a mono 44100 Hz :class:`AudioStream`.

    Supports 16-bit integer PCM and 32-bit IEEE float, mono or stereo.
    Stereo is averaged; other sample rates are linearly resampled.
    """
    data = bytes(data)
    if len(data) < 12:
        raise DecodeError("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise DecodeError("missing RIFF magic", 0)
    if data[8:12] != b"WAVE":
        raise DecodeError("missing WAVE form type", 8)

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(data):
                raise DecodeError("truncated fmt chunk", pos)
            fmt = struct.unpack_from("<HHIIHH", data, body)
            tag = fmt[0]
            if tag == _FMT_EXTENSIBLE and size >= 40:
                (sub,) = struct.unpack_from("<H", data, body + 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise DecodeError("data chunk before fmt chunk", pos)
            # tolerate streamed files whose data size overruns the file
            payload = data[body:min(body + size, len(data))]
            break
        pos = body + size + (size & 1)

    if fmt is None:
        raise DecodeError("no fmt chunk found", pos)
    if payload is None:
        raise DecodeError("no data chunk found", pos)

    tag, channels, rate, _, block_align, bits = fmt
    if tag == _FMT_PCM and bits == 16:
        dtype = "<i2"
        scale = 1.0 / 32768.0
    elif tag == _FMT_FLOAT and bits == 32:
        dtype = "<f4"
        scale = 1.0
    else:
        name = _CODEC_NAMES.get(tag, "PCM" if tag == _FMT_PCM else "unknown")
        raise UnsupportedFormatError(
            f"unsupported codec tag 0x{tag:04x} ({name}, {bits}-bit)", tag
        )
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"unsupported channel count {channels}", tag)
    if rate == 0:
        raise DecodeError("zero sample rate", 24)

    width = bits // 8 * channels
    usable = len(payload) - len(payload) % width
    samples = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float64) * scale
    samples = samples.reshape(-1, channels)
    if channels == 1:
        samples = samples[:, 0]
    return _finalize(samples, rate)


def read_wav(path):
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def encode_wav(samples, sample_rate=SAMPLE_RATE, bits=16):
    """Encode mono (n,) or interleaved (n, ch) samples as a WAV byte string."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    channels = samples.shape[1]
    if bits == 16:
        tag = _FMT_PCM
        pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    elif bits == 32:
        tag = _FMT_FLOAT
        pcm = samples.astype("<f4")
    else:
        raise ParameterError("bits must be 16 or 32")
    body = pcm.tobytes()
    block = channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, tag, channels, sample_rate, sample_rate * block, block, bits
    )
    header += b"data" + struct.pack("<I", len(body))
    return header + body


def write_wav(path, samples, sample_rate=SAMPLE_RATE, bits=16):
    with open(path, "wb") as fh:
        fh.write(encode_wav(samples, sample_rate, bits))


def frame_count(n, cfg=FrameConfig()):
    if n < cfg.window_len:
        return 0
    return (n - cfg.window_len) // cfg.hop + 1


def frame_stream(stream, cfg=FrameConfig()):
    """Overlapped frames as a read-only strided view, shape (n_frames, window_len)."""
    x = stream.samples if isinstance(stream, AudioStream) else np.asarray(stream)
    n_frames = frame_count(x.shape[0], cfg)
    if n_frames == 0:
        return np.empty((0, cfg.window_len), dtype=x.dtype)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop]
    return frames[:n_frames]

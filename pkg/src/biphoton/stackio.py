"""BPFS frame-stack files.

Little-endian layout::

    magic    4s   b"BPFS"
    version  u16  1
    width    u16
    height   u16
    n_frames u64
    seed     u64
    mode     u8   0 dark, 1 near field, 2 far field
    reserved 7x
    frames   n_frames * height * width u16, row-major
"""
from __future__ import annotations

import os
import struct
from typing import Iterable

import numpy as np

from .simulator import FrameStack, StackMode

MAGIC = b"BPFS"
VERSION = 1
HEADER = struct.Struct("<4sHHHQQB7x")
_PIXEL = np.dtype("<u2")


class StackFormatError(ValueError):
    """File is not a BPFS stack."""


class StackVersionError(StackFormatError):
    pass


class StackTruncatedError(StackFormatError):
    def __init__(self, path, expected: int, actual: int):
        super().__init__(f"{path}: truncated stack, header declares {expected} frames "
                         f"but payload holds {actual}")
        self.expected = expected
        self.actual = actual


def _header(width, height, n_frames, seed, mode) -> bytes:
    return HEADER.pack(MAGIC, VERSION, width, height, n_frames,
                       int(seed) & ((1 << 64) - 1), int(mode))


def write_stack(path, stack: FrameStack) -> None:
    write_stack_stream(path, stack.width, stack.height, stack.seed, stack.mode,
                       stack.n_frames, [stack.frames])


def write_stack_stream(path, width: int, height: int, seed: int, mode: StackMode,
                       n_frames: int, chunks: Iterable[np.ndarray]) -> None:
    """Write a stack whose frames arrive in chunks of shape (k, height, width)."""
    written = 0
    with open(path, "wb") as fh:
        fh.write(_header(width, height, n_frames, seed, mode))
        for chunk in chunks:
            chunk = np.asarray(chunk)
            if chunk.shape[1:] != (height, width):
                raise ValueError(f"chunk shape {chunk.shape} does not match {height}x{width}")
            fh.write(np.ascontiguousarray(chunk, dtype=_PIXEL).tobytes())
            written += chunk.shape[0]
    if written != n_frames:
        raise ValueError(f"declared {n_frames} frames but wrote {written}")


def read_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size or raw[:4] != MAGIC:
        raise StackFormatError(f"{path}: not a BPFS stack (bad magic)")
    magic, version, width, height, n_frames, seed, mode = HEADER.unpack(raw)
    if version != VERSION:
        raise StackVersionError(f"{path}: unsupported BPFS version {version}")
    try:
        mode = StackMode(mode)
    except ValueError:
        raise StackFormatError(f"{path}: unknown mode tag {mode}") from None
    return width, height, n_frames, seed, mode


def read_stack(path, mmap: bool = True) -> FrameStack:
    """Open a stack; by default the frames are a read-only memory map."""
    width, height, n_frames, seed, mode = read_header(path)
    frame_bytes = width * height * _PIXEL.itemsize
    payload = os.path.getsize(path) - HEADER.size
    if payload < n_frames * frame_bytes:
        raise StackTruncatedError(path, n_frames, payload // frame_bytes if frame_bytes else 0)
    shape = (n_frames, height, width)
    if n_frames == 0:
        frames = np.zeros(shape, dtype=_PIXEL)
    elif mmap:
        frames = np.memmap(path, dtype=_PIXEL, mode="r", offset=HEADER.size, shape=shape)
    else:
        with open(path, "rb") as fh:
            fh.seek(HEADER.size)
            frames = np.frombuffer(fh.read(n_frames * frame_bytes), dtype=_PIXEL).reshape(shape)
    return FrameStack(width=width, height=height, seed=seed, mode=mode, frames=frames)


class FileSource:
    """Frame source over a BPFS file, compatible with :class:`SimulatedSource`."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self.width, self.height, self.n_frames, self.seed, self.mode = read_header(self.path)
        read_stack(self.path)  # validates payload length

    def frames(self, start: int, stop: int) -> np.ndarray:
        return np.asarray(read_stack(self.path).frames[start:stop])

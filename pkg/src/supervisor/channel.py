"""
Length-prefixed frames over a pipe: 8-byte little-endian unsigned length, then the bytes.
"""

import os
import struct
from typing import List, Optional

FRAME_HEADER = struct.Struct("<Q")
CHUNK_SIZE = 65536


def encode_frame(data: bytes) -> bytes:
    return FRAME_HEADER.pack(len(data)) + bytes(data)


def decode_frame(buffer: bytes) -> Optional[bytes]:
    """
    Decode one frame from everything read off a pipe.

    Returns:
        The frame body, or None when the header or body is incomplete or
        trailing bytes follow it.
    """
    if len(buffer) < FRAME_HEADER.size:
        return None
    (length,) = FRAME_HEADER.unpack_from(buffer)
    if len(buffer) != FRAME_HEADER.size + length:
        return None
    return bytes(buffer[FRAME_HEADER.size:])


def write_frame(fd: int, data: bytes):
    """Write a whole frame, retrying partial writes."""
    view = memoryview(encode_frame(data))
    while view:
        written = os.write(fd, view[:CHUNK_SIZE * 16])
        view = view[written:]


def read_available(fd: int) -> bytes:
    """Read what a non-blocking descriptor holds right now, up to EOF."""
    chunks = []
    os.set_blocking(fd, False)
    try:
        while True:
            data = os.read(fd, CHUNK_SIZE)
            if not data:
                break
            chunks.append(data)
    except (BlockingIOError, OSError):
        pass
    return b"".join(chunks)


def split_frames(buffer: bytes) -> List[bytes]:
    """Every complete frame in buffer, in order; a truncated tail is dropped."""
    frames = []
    offset = 0
    while len(buffer) - offset >= FRAME_HEADER.size:
        (length,) = FRAME_HEADER.unpack_from(buffer, offset)
        end = offset + FRAME_HEADER.size + length
        if end > len(buffer):
            break
        frames.append(bytes(buffer[offset + FRAME_HEADER.size:end]))
        offset = end
    return frames

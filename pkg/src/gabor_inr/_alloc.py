"""glibc allocator tuning for the training loop.

Every step allocates and frees many large temporaries.  By default glibc
serves them with fresh mmap calls and returns them to the OS on free, so each
step pays for page faults on memory it just released.  Raising the mmap and
trim thresholds keeps those blocks on the heap.  No-op on other platforms.
"""
import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_done = False


def tune_allocator() -> None:
    global _done
    if _done:
        return
    _done = True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return
    mallopt.argtypes = [ctypes.c_int, ctypes.c_int]
    mallopt(_M_MMAP_THRESHOLD, 32 << 20)  # glibc caps the threshold at 32 MiB
    mallopt(_M_TRIM_THRESHOLD, (1 << 31) - 1)

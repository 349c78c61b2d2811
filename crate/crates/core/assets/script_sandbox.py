# Runs one agent-generated script with file, command and network access
# replaced by stubs that raise. Each blocked call is reported on stderr.
import builtins
import json
import os
import sys

import base64
import binascii
import bisect
import collections
import decimal
import fractions
import functools
import hashlib
import heapq
import itertools
import linecache
import math
import operator
import random
import re
import shutil
import socket
import statistics
import string
import struct
import subprocess
import textwrap
import traceback

_HERE = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(_HERE, "logs.json"), encoding="utf-8") as _f:
    _LOGS = json.load(_f)
with open(os.path.join(_HERE, "script.py"), encoding="utf-8") as _f:
    _CODE = _f.read()

_write = os.write
_fsdecode = os.fsdecode
_realpath = os.path.realpath
_ALLOWED = tuple(sorted({_realpath(p) for p in sys.path if p}))
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_TRUNC | os.O_APPEND
_state = {"guard": False}

_CMD_EVENTS = {
    "os.system", "subprocess.Popen", "os.exec", "os.spawn", "os.posix_spawn",
    "os.fork", "os.forkpty", "pty.spawn", "os.kill", "os.killpg", "ctypes.dlopen",
}
_FS_EVENTS = {
    "os.remove", "os.rename", "os.rmdir", "os.mkdir", "os.chmod", "os.chown",
    "os.link", "os.symlink", "os.truncate", "os.utime", "os.listdir", "os.scandir",
    "os.chdir", "shutil.rmtree", "shutil.copyfile", "shutil.copymode",
    "shutil.copystat", "shutil.move", "glob.glob", "os.chflags", "os.removexattr",
    "os.setxattr",
}
_NET_EVENTS = {"socket.connect", "socket.bind", "socket.getaddrinfo", "socket.sendto"}


class SandboxViolation(PermissionError):
    pass


def _blocked(kind, detail):
    if not _state["guard"]:
        record = json.dumps({"kind": kind, "detail": detail})
        _write(2, ("\x00VRVIOLATION " + record + "\n").encode("utf-8", "replace"))
    raise SandboxViolation(detail + ": blocked by the sandboxed execution environment")


def _allowed_path(path):
    try:
        real = _realpath(_fsdecode(path))
    except Exception:
        return False
    return any(real == root or real.startswith(root + os.sep) for root in _ALLOWED)


def _hook(event, args):
    if _state["guard"]:
        return
    if event == "open":
        path, mode, flags = args
        if isinstance(path, int):
            return
        writing = bool(mode and any(c in mode for c in "wax+")) or bool((flags or 0) & _WRITE_FLAGS)
        if not writing and _allowed_path(path):
            return
        _blocked("write" if writing else "read", "open(%r)" % (_fsdecode(path),))
    elif event in _CMD_EVENTS:
        _blocked("cmd", event)
    elif event in _FS_EVENTS:
        if event in ("os.listdir", "os.scandir") and args and args[0] is not None and _allowed_path(args[0]):
            return
        _blocked("fs", event)
    elif event in _NET_EVENTS:
        _blocked("net", event)


def _stub(kind, name):
    def stub(*args, **kwargs):
        _blocked(kind, name)
    stub.__name__ = name.rsplit(".", 1)[-1]
    return stub


def get_poc_output(name):
    """Full, untruncated log of the PoC run named `name`."""
    if name not in _LOGS:
        raise KeyError("unknown PoC run name: %r (known: %s)" % (name, ", ".join(sorted(_LOGS)) or "none"))
    return _LOGS[name]


linecache.cache["<script>"] = (len(_CODE), None, _CODE.splitlines(True), "<script>")
builtins.open = _stub("read", "open")
for _name in ("system", "popen", "remove", "unlink", "rmdir", "mkdir", "makedirs", "rename",
              "listdir", "scandir", "walk", "chdir", "execv", "execve", "execvp", "spawnv", "fork"):
    if hasattr(os, _name):
        setattr(os, _name, _stub("cmd" if _name in ("system", "popen") or _name.startswith(("exec", "spawn", "fork")) else "fs", "os." + _name))
for _name in ("run", "Popen", "call", "check_call", "check_output", "getoutput", "getstatusoutput"):
    setattr(subprocess, _name, _stub("cmd", "subprocess." + _name))
for _name in ("rmtree", "copy", "copyfile", "copytree", "move"):
    setattr(shutil, _name, _stub("fs", "shutil." + _name))
sys.addaudithook(_hook)

_globals = {"__name__": "__main__", "__builtins__": builtins, "get_poc_output": get_poc_output}
try:
    exec(compile(_CODE, "<script>", "exec"), _globals)
except SystemExit:
    pass
except BaseException:
    _state["guard"] = True
    traceback.print_exc(file=sys.stdout)
    _write(2, b"\x00VRERROR\n")
sys.stdout.flush()

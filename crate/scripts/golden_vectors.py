#!/usr/bin/env python3
"""Recompute the golden vectors from the documented byte layouts.

Shares no code with the Rust crate: every field is laid out by hand and
hashed with hashlib; signatures come from the `cryptography` package.
Output is the `key = hex` file checked in under
crates/core/tests/fixtures/golden_vectors.txt.
"""
import hashlib
import struct
import sys

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives import serialization


def u32(n):
    return struct.pack(">I", n)


def u64(n):
    return struct.pack(">Q", n)


def field(b):
    return u32(len(b)) + b


def draw(did, fingerprints, entries, info):
    out = b"DRAWv1" + field(did.encode())
    out += u32(len(fingerprints)) + b"".join(field(f) for f in fingerprints)
    out += u32(len(entries)) + b"".join(field(c.encode()) + u64(w) for c, w in entries)
    return out + field(info.encode())


def sha(b):
    return hashlib.sha256(b).digest()


def main():
    fps = [bytes([0x11]) * 32, bytes([0x22]) * 32]
    cands = [("alice", 1), ("bob", 1), ("carol", 1)]
    mask = bytes(range(32))

    single = draw("123.456-7#0", fps, cands, "appeal case")
    commit = sha(b"COMMITv1" + single + mask + u64(2))

    weighted = draw("W#0", fps, [("e0", 2), ("e1", 3), ("e2", 3), ("e3", 4)], "")

    chain = [draw(f"X#{i}", fps, cands, "") for i in range(3)]
    shares = [0, 1, 2]
    link = mask
    links = []
    for d, s in zip(chain, shares):
        link = sha(b"CHAINv1" + d + link + u64(s))
        links.append(link)

    sk = Ed25519PrivateKey.from_private_bytes(bytes([7]) * 32)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    fp = sha(pk)
    payload = b"MSGv1" + single + commit
    sig = sk.sign(payload)

    commit_wire = b"MSGv1" + bytes([1, 0]) + u32(1) + field(b"123.456-7#0") + field(fp) + field(commit) + field(sig)
    reveal_wire = b"MSGv1" + bytes([2]) + field(fp) + field(mask) + u32(1) + u64(2)

    rows = [
        ("draw_single", single),
        ("commit_single", commit),
        ("draw_weighted", weighted),
        ("chain_link_0", links[0]),
        ("chain_link_1", links[1]),
        ("chain_link_2", links[2]),
        ("public_key", pk),
        ("fingerprint", fp),
        ("signing_payload", payload),
        ("signature", sig),
        ("commit_wire", commit_wire),
        ("reveal_wire", reveal_wire),
    ]
    for k, v in rows:
        sys.stdout.write(f"{k} = {v.hex()}\n")


if __name__ == "__main__":
    main()

"""Smoke test for the `elastic` extension module.

Build first (from the repo root):
    cargo build -p elastic-py --features extension-module
    cp target/debug/libelastic.so python/elastic.so
or install with maturin: pip install --no-build-isolation ./crates/py
"""

import json
import os
import struct
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import elastic  # noqa: E402


def main():
    assert elastic.ideal_speedup(0.3, 2, 6) == 1.875
    assert elastic.ideal_speedup(0.7, 4, 6, 0.0) == 1.1111111111111112
    try:
        elastic.ideal_speedup(1.0, 2, 6)
    except ValueError:
        pass
    else:
        raise AssertionError("p=1 accepted")

    body = json.dumps({"method": "Scale", "id": 1, "params": {"nodes": 4, "mode": "absolute"}})
    frame = elastic.encode_frame(body)
    want = b'{"id":1,"method":"Scale","params":{"mode":"absolute","nodes":4}}'
    assert frame == struct.pack(">I", len(want)) + want, frame
    text, used = elastic.decode_frame(frame + b"trailing")
    assert used == len(frame) and text.encode() == want

    x = 0.5
    for _ in range(3):
        x = x * 0.999999 + 1e-6
    assert elastic.parint_step(0.5, 3) == x
    assert [elastic.block_range(8, r, 3) for r in range(3)] == [(0, 2), (2, 5), (5, 8)]

    with tempfile.TemporaryDirectory() as d:
        for name in ("cm1rst_000003", "cm1rst_000011_w.dat", "other"):
            open(os.path.join(d, name), "w").close()
        assert elastic.find_latest_restart(d, "cm1rst_") == 11
        nl = os.path.join(d, "namelist.input")
        with open(nl, "w") as f:
            f.write(" irst = 0,\n")
        elastic.rewrite_restart_parameter(nl, "irst", "11")
        assert open(nl).read() == " irst = 11,\n"

    assert elastic.legal_trace(["WaitingForExecutors", "Running", "Scaling", "Checkpointing", "Relaunching", "Running", "Complete"])
    assert not elastic.legal_trace(["WaitingForExecutors", "Running", "Scaling", "Complete"])
    assert elastic.CSV_HEADER.startswith("experiment,")
    print("elastic smoke test ok")


if __name__ == "__main__":
    main()

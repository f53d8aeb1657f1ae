import hashlib
import os
import socket
import subprocess
import sys
import time

import pytest

from streamlabel.cli import build_parser, main
from streamlabel.imaging import GrayImage, encode_bmp24, encode_pgm, random_binary


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def diag_pgm(tmp_path):
    p = tmp_path / "diag.pgm"
    p.write_bytes(encode_pgm(GrayImage(2, 2, bytes([255, 0, 0, 255]))))
    return p


@pytest.fixture
def random_pgm(tmp_path):
    img = random_binary(48, 32, 0.5, 21)
    p = tmp_path / "rand.pgm"
    p.write_bytes(encode_pgm(GrayImage(img.width, img.height, img.pixels)))
    return p


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_label_writes_ppm(capsys, diag_pgm, tmp_path):
    out = tmp_path / "labels.ppm"
    code, stdout, _ = run(capsys, "label", diag_pgm, "--out", out)
    assert code == 0
    assert stdout.strip() == "components: 2"
    assert out.read_bytes().startswith(b"P6\n2 2\n255\n")


def test_connectivity_changes_count(capsys, diag_pgm):
    counts = {}
    for mode in ("conn4", "conn8"):
        code, stdout, _ = run(capsys, "label", diag_pgm, "--connectivity", mode)
        assert code == 0
        counts[mode] = int(stdout.split(":")[1])
    assert counts["conn4"] - counts["conn8"] == 1


def test_label_bmp_input(capsys, tmp_path):
    p = tmp_path / "img.bmp"
    p.write_bytes(encode_bmp24(GrayImage(3, 1, bytes([255, 0, 255]))))
    assert run(capsys, "label", p)[1].strip() == "components: 2"


def test_missing_file(capsys, tmp_path):
    missing = tmp_path / "nope.pgm"
    for cmd in ("label", "simulate", "pipeline"):
        code, _, err = run(capsys, cmd, missing)
        assert code == 2
        assert str(missing) in err


def test_corrupt_file_is_data_error(capsys, tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x00")
    code, _, err = run(capsys, "label", p)
    assert code == 3
    assert "truncated" in err


def test_usage_errors_exit_1(capsys, diag_pgm):
    assert run(capsys, "label", diag_pgm, "--threshold", "300")[0] == 1
    assert run(capsys, "label", diag_pgm, "--connectivity", "conn6")[0] == 1
    assert run(capsys, "simulate", diag_pgm, "--fifo-capacity", "0")[0] == 1
    assert run(capsys, "pipeline", diag_pgm, "--spawn-registry")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys)[0] == 1


def test_overflow_exit_code(capsys):
    code, _, err = run(capsys, "label", "pattern:diagonal:300x300")
    assert code == 3
    assert "label capacity exceeded" in err
    code, stdout, _ = run(capsys, "label", "pattern:diagonal:300x300", "--overflow", "saturate")
    assert code == 0
    code, stdout, _ = run(capsys, "label", "pattern:diagonal:300x300", "--label-bits", "16")
    assert (code, stdout.strip()) == (0, "components: 300")


def test_simulate_tiny(capsys):
    code, stdout, _ = run(capsys, "simulate", "pattern:white:4x1")
    assert code == 0
    assert stdout.splitlines()[-1].startswith("compute_cycles=5 ")


def test_simulate_full_hd(capsys):
    code, stdout, _ = run(capsys, "simulate", "pattern:black:1920x1080")
    assert code == 0
    assert "compute_cycles=2592000 frame_time_ms=25.92" in stdout


def _record(stdout):
    line = stdout.strip().splitlines()[-1]
    return dict(kv.split("=") for kv in line.split())


def test_simulate_fifo_capacity_one(capsys, random_pgm, tmp_path):
    a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
    _, small, _ = run(capsys, "simulate", random_pgm, "--fifo-capacity", 1, "--label-bits", 32, "--out", a)
    _, big, _ = run(capsys, "simulate", random_pgm, "--label-bits", 32, "--out", b)
    assert int(_record(small)["total_cycles"]) > int(_record(big)["total_cycles"])
    assert sha(a) == sha(b)


def test_simulate_clock_and_dma(capsys):
    _, stdout, _ = run(capsys, "simulate", "pattern:white:8x1", "--clock-ns", "5", "--dma-rate", "1/2")
    rec = _record(stdout)
    assert rec["compute_cycles"] == "10"
    assert rec["frame_time_ms"] == "0.00005"


def test_pipeline_engines_same_file(capsys, random_pgm, tmp_path):
    outs = {}
    for engine in ("sw", "sim"):
        outs[engine] = tmp_path / f"{engine}.ppm"
        code, stdout, _ = run(capsys, "pipeline", random_pgm, "--engine", engine,
                              "--label-bits", 32, "--out", outs[engine])
        assert code == 0
        assert "seg5_pub_sub_out_ms=" in stdout
    assert sha(outs["sw"]) == sha(outs["sim"])


def test_pipeline_raw_and_tcp(capsys):
    code, stdout, _ = run(capsys, "pipeline", "pattern:diagonal:2x2", "--tcp", "--spawn-registry", "--raw")
    assert code == 0
    assert "1 0\n0 2" in stdout
    assert "frame_id=0 width=2 height=2" in stdout


def test_pipeline_tcp_without_registry(capsys, monkeypatch):
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    monkeypatch.setenv("STREAMLABEL_REGISTRY", f"127.0.0.1:{port}")
    code, _, err = run(capsys, "pipeline", "pattern:white:2x2", "--tcp")
    assert code == 2
    assert "registry" in err


def test_bench_table(capsys):
    code, stdout, _ = run(capsys, "bench", "pattern:random:32x32:0.5:1", "--iterations", 10,
                          "--engine", "sim", "--label-bits", 32)
    assert code == 0
    lines = stdout.strip().splitlines()
    assert lines[0] == "engine=simulated_hw iterations=10"
    assert [ln.split()[0] for ln in lines[2:]] == [
        "seg1_pub_sub_in", "seg2_pre_label", "seg3_label", "seg4_post_label", "seg5_pub_sub_out", "total",
    ]


def test_bench_kv(capsys):
    code, stdout, _ = run(capsys, "bench", "pattern:white:4x4", "--iterations", 3, "--format", "kv")
    assert code == 0
    lines = stdout.strip().splitlines()
    assert len(lines) == 6 + 3
    assert all(ln.startswith("engine=simulated_hw ") for ln in lines)


@pytest.mark.parametrize("cmd", [[], ["label"], ["simulate"], ["pipeline"], ["bench"], ["registry"]])
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args([*cmd, "--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    if cmd in (["simulate"], ["bench"]):
        for flag in ("--threshold", "--connectivity", "--label-bits", "--overflow", "--fifo-capacity"):
            assert flag in out


def test_registry_subprocess_and_module_entry():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    proc = subprocess.Popen(
        [sys.executable, "-m", "streamlabel", "registry", "--host", "127.0.0.1", "--port", str(port)],
        stdout=subprocess.PIPE, text=True, env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )
    try:
        assert proc.stdout.readline().strip() == f"registry listening on 127.0.0.1:{port}"
        deadline = time.monotonic() + 5
        while True:
            try:
                conn = socket.create_connection(("127.0.0.1", port), timeout=1)
                break
            except OSError:
                assert time.monotonic() < deadline
                time.sleep(0.05)
        with conn:
            f = conn.makefile("rwb")
            f.write(b"REGISTER data_input 127.0.0.1:7001\nLOOKUP data_input\nLOOKUP other\n")
            f.flush()
            assert [f.readline() for _ in range(3)] == [b"OK\n", b"OK 1 127.0.0.1:7001\n", b"OK 0\n"]
    finally:
        proc.terminate()
        proc.wait(timeout=5)

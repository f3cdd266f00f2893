# SPDX-FileCopyrightText: 2026 The lsplit Authors
# SPDX-License-Identifier: Apache-2.0

import struct

import pytest

import lsplit

SMALL = {
    "n_blocks": 4,
    "d_model": 32,
    "heads": 4,
    "max_len": 96,
    "l_out": 8,
    "stop_at_eos": "false",
    "bench_local_layers": "2",
}


def test_quantize_round_trip():
    packed, scale, zp = lsplit.quantize([-1.0, 0.0, 1.0], 8)
    assert list(packed) == [0, 128, 255]
    assert zp == 128
    assert scale == pytest.approx(2 / 255)
    back = lsplit.dequantize(packed, 8, scale, zp, 3)
    assert back == pytest.approx([-1.0, 0.0, 1.0], abs=scale / 2 + 1e-6)


def test_half_precision():
    assert lsplit.float_to_half(1.0) == 0x3C00
    assert lsplit.half_to_float(lsplit.float_to_half(70000.0)) == 65504.0


def test_frames():
    end = lsplit.encode_bytes_frame("END", 7, 3)
    assert len(end) == 25
    assert end[:4] == b"LSPL"
    frame = lsplit.decode_frame(end)
    assert frame["type"] == "END"
    assert frame["session_id"] == 7

    head = lsplit.encode_tensor_frame("HEAD_OUT", 1, 0, [1, 8], [float(i) for i in range(8)])
    assert len(head) == 65
    assert lsplit.frame_values(head) == [float(i) for i in range(8)]
    assert struct.unpack_from("<I", head, 16)[0] == 0

    with pytest.raises(lsplit.LsplitError):
        lsplit.decode_frame(b"")


def test_traffic_formula():
    assert lsplit.analytic_llm_traffic(14, 300, 4096, 2, False) == 401817600
    assert lsplit.analytic_llm_traffic(14, 300, 4096, 2, True) == 2564096
    assert lsplit.deliver(1e9, 0.0, 125000) == pytest.approx(1e-3)
    assert lsplit.plan_partition(32, 16) == (8, 24)


def test_metrics():
    a = bytes([10]) * (8 * 8 * 3)
    b = bytes([11]) * (8 * 8 * 3)
    assert lsplit.psnr(a, a, 8, 8) == 99.0
    assert lsplit.psnr(a, b, 8, 8) == pytest.approx(48.13, abs=0.01)
    assert lsplit.ssim(a, a, 8, 8) == pytest.approx(1.0)


def test_leak_detector():
    hits = lsplit.detect_plaintext_leak([b"xxhello worldyy"], b"hello")
    assert hits == [(0, 2, 5, 0)]


def test_split_matches_local_and_hides_prompt():
    prompt = "how do split models keep prompts private"
    local = lsplit.generate(SMALL, mode="local-only", prompt=prompt)
    split = lsplit.generate(SMALL, mode="lambda-split", prompt=prompt)
    cloud = lsplit.generate(SMALL, mode="cloud-only", prompt=prompt)
    assert local["tokens"] == split["tokens"] == cloud["tokens"]
    assert local["report"]["total_bytes"] == 0
    assert split["capture"]["leak_count"] == 0
    assert cloud["capture"]["leak_count"] > 0
    d = SMALL["d_model"]
    assert split["report"]["uplink"]["payload_bytes"] == lsplit.analytic_llm_traffic(len(prompt), 8, d, 4, True)


def test_ldm_image():
    out = lsplit.generate(SMALL, kind="ldm", mode="lambda-split", prompt="a red boat", t_steps=4)
    assert out["ok"]
    assert out["image_ppm"].startswith(b"P6\n32 32\n255\n")


def test_benchmark_rows():
    rows = lsplit.benchmark(SMALL)
    assert len(rows) == 4
    assert list(rows[0].keys()) == lsplit.report_columns()
    assert all(r["matches_monolithic"] == "true" for r in rows)

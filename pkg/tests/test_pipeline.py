import pytest

from streamlabel.hwsim import run_frame
from streamlabel.imaging import BinaryImage, make_pattern, random_binary
from streamlabel.labeling import CONN8, LabelerConfig, first_pass, flood_fill_oracle, resolve
from streamlabel.msgbus import RegistryServer
from streamlabel.pipeline import (
    SEGMENTS,
    BenchStats,
    LabelingPipeline,
    LatencyBreakdown,
    PipelineConfig,
    PipelineError,
    bench,
    run_pipeline,
)

WIDE = PipelineConfig(labeler=LabelerConfig(label_bits=32))


@pytest.fixture(scope="module")
def full_hd():
    img = make_pattern("blobs:1920x1080")
    return img, run_pipeline(img, "sim", frame_id=77)


def test_engines_agree_on_64x64():
    for seed in range(3):
        img = random_binary(64, 64, 0.45, seed)
        sim = run_pipeline(img, "sim", WIDE)
        sw = run_pipeline(img, "sw", WIDE)
        assert sim.output == sw.output
        assert sim.labels == sw.labels == flood_fill_oracle(img)
        assert sim.sim_report is not None and sw.sim_report is None


def test_full_hd_cycles(full_hd):
    _, res = full_hd
    assert res.sim_report.compute_cycles == 2_592_000
    assert res.sim_report.frame_time_ns == 25_920_000


def test_full_hd_metadata_and_payload(full_hd):
    img, res = full_hd
    assert (res.output.frame_id, res.output.width, res.output.height) == (77, 1920, 1080)
    assert res.sim_report.in_words == 1920 * 1080
    assert res.sim_report.out_words == 1920 * 1080
    assert res.output.pixels == first_pass(img).labels.labels
    assert res.labels == resolve(first_pass(img))
    assert res.summary.components == 4


def test_full_hd_accounting(full_hd):
    bd = full_hd[1].breakdown
    assert abs(bd.segment_sum - bd.total) <= 1e-3
    assert all(v >= 0 for v in bd.segments().values())


def test_published_labels_equal_sim_output():
    img = random_binary(40, 30, 0.5, 4)
    res = run_pipeline(img, "sim", WIDE, frame_id=-3)
    fp, report = run_frame(img, WIDE.labeler)
    assert res.output.pixels == fp.labels.labels
    assert res.frame_id == -3
    assert res.sim_report == report


def test_all_black_frame():
    res = run_pipeline(BinaryImage(16, 8, bytes(128)), "sim")
    assert set(res.labels.labels) == {0}
    assert res.summary.components == 0
    assert res.breakdown.seg3_label > 0


def test_pattern_source_and_connectivity():
    cfg = PipelineConfig(labeler=LabelerConfig(ref_set=CONN8))
    res = run_pipeline("pattern:diagonal:2x2", "sw", cfg)
    assert res.summary.components == 1
    assert run_pipeline("pattern:diagonal:2x2", "sw").summary.components == 2


def test_malformed_input_isolated():
    with LabelingPipeline("sim", WIDE) as pipe:
        pipe.input_pub.publish_raw(b"junk")
        res = pipe.process(random_binary(8, 8, 0.5, 1), frame_id=5, timeout=10)
        assert pipe.decode_errors == 1
        assert res.frame_id == 5


def test_several_frames_one_pipeline():
    imgs = [random_binary(20, 10, 0.5, s) for s in range(4)]
    with LabelingPipeline("sw", WIDE) as pipe:
        for i, img in enumerate(imgs):
            pipe.submit(img, i)
        for i, img in enumerate(imgs):
            assert pipe.wait(i, timeout=10).labels == flood_fill_oracle(img)


def test_overflow_error_names_node():
    img = BinaryImage(600, 1, b"\xff\x00" * 300)
    with pytest.raises(PipelineError, match="label capacity exceeded") as info:
        run_pipeline(img, "sim", timeout=20)
    assert info.value.node == "fpga_sim"
    with pytest.raises(PipelineError) as info:
        run_pipeline(img, "sw", timeout=20)
    assert info.value.node == "software_labeler"


def test_missing_source_names_input_node(tmp_path):
    with pytest.raises(PipelineError) as info:
        run_pipeline(str(tmp_path / "nope.pgm"))
    assert info.value.node == "input_image"


def test_unknown_engine():
    with pytest.raises(ValueError):
        run_pipeline(BinaryImage(1, 1, b"\xff"), "gpu")


def test_tcp_transport_matches_inproc():
    srv = RegistryServer().start()
    try:
        img = random_binary(32, 16, 0.5, 8)
        tcp = run_pipeline(img, "sim", WIDE, transport="tcp", registry=srv.endpoint, timeout=20)
        local = run_pipeline(img, "sim", WIDE)
        assert tcp.output == local.output
        assert tcp.labels == local.labels
    finally:
        srv.stop()


def test_breakdown_from_stamps():
    bd = LatencyBreakdown.from_stamps([0.0, 0.001, 0.003, 0.006, 0.010, 0.015])
    assert [round(v, 6) for v in bd.segments().values()] == [0.001, 0.002, 0.003, 0.004, 0.005]
    assert bd.total == pytest.approx(0.015)
    assert bd.to_record().startswith("seg1_pub_sub_in_ms=1.000 ")


def test_bench_ten_iterations():
    stats = bench(random_binary(24, 24, 0.5, 2), "sim", iterations=10, config=WIDE)
    assert stats.iterations == len(stats.runs) == 10
    for s in [*stats.segments.values(), stats.total]:
        assert s.min <= s.mean <= s.max
    for r in stats.runs:
        assert abs(r.segment_sum - r.total) <= 1e-3
    table = stats.format_table()
    assert "iterations=10" in table
    for name in SEGMENTS:
        assert name in table
    records = stats.to_records()
    assert sum(r.startswith("engine=simulated_hw run=") for r in records) == 10


def test_bench_single_iteration():
    stats = bench(BinaryImage(4, 4, b"\xff" * 16), "sw", iterations=1)
    for s in [*stats.segments.values(), stats.total]:
        assert s.min == s.mean == s.max


def test_bench_rejects_zero_iterations():
    with pytest.raises(ValueError):
        bench(BinaryImage(1, 1, b"\xff"), iterations=0)


def test_bench_stats_aggregation():
    runs = [LatencyBreakdown.from_stamps([0, 1, 2, 3, 4, k]) for k in (5, 7)]
    stats = BenchStats.from_runs("software_labeler", runs)
    assert stats.total.mean == 6
    assert stats.segments["seg5_pub_sub_out"].min == 1
    assert stats.segments["seg5_pub_sub_out"].max == 3

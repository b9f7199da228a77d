import json
import subprocess
import sys

import numpy as np
import pytest

from cpattn.cli import main
from cpattn.graph import load_graph
from cpattn.mask import read_bitset, read_pbm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def graph_file(tmp_path, capsys):
    path = tmp_path / "g.json"
    assert run(capsys, "generate", "--nodes", 8, "--core", 2, "--seed", 3, "--out", path)[0] == 0
    return path


def test_generate_and_measure(graph_file, capsys):
    g = load_graph(graph_file)
    assert (g.n, g.m) == (8, 2)
    code, out, _ = run(capsys, "measure", "--graph", graph_file)
    assert code == 0
    header, values = out.splitlines()
    assert header == "i_cc,i_cp,i_pp,r_cc,r_cp,r_pp"
    v = [float(x) for x in values.split(",")]
    assert v[0] > v[1] > v[2]
    assert sum(v[3:]) == pytest.approx(1.0)


def test_generate_bad_parameters_exit_2(tmp_path, capsys):
    assert run(capsys, "generate", "--nodes", 4, "--core", 5, "--out", tmp_path / "x.json")[0] == 2
    assert run(capsys, "generate", "--nodes", 4, "--core", 2, "--thresholds", "0.1,0.2",
               "--out", tmp_path / "x.json")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--nodes", "four"])
    assert exc.value.code == 2


def test_generate_unreachable_cp_exit_3(tmp_path, capsys):
    # a single core node has no core-core pair
    code, _, err = run(capsys, "generate", "--nodes", 2, "--core", 1, "--out", tmp_path / "x.json")
    assert code == 3 and "generate" in err


def test_detect_lists_every_node(graph_file, capsys):
    code, out, _ = run(capsys, "detect", "--graph", graph_file)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "node,label" and len(lines) == 1 + 8 + 1
    assert lines[-1].startswith("# score=")


def test_mask_formats(graph_file, tmp_path, capsys):
    pbm, binf = tmp_path / "m.pgm", tmp_path / "m.bin"
    code, out, _ = run(capsys, "mask", "--graph", graph_file, "--patches", 16, "--out", pbm, "--bitset", binf)
    assert code == 0
    assert out.startswith("connection_ratio,") and out.strip().endswith("%")
    a, b = read_pbm(pbm), read_bitset(binf)
    assert np.array_equal(a.bits, b.bits) and a.size == 17
    pct = float(out.strip().split(",")[1].rstrip("%"))
    assert pct == pytest.approx(100 * a.bits.mean(), abs=0.005)


def test_mask_complete_graph_prints_100(tmp_path, capsys):
    path = tmp_path / "k.json"
    path.write_text(json.dumps({
        "n": 3, "m": 3, "thresholds": [0, 0, 0], "seed": 0, "edges": [[0, 1], [0, 2], [1, 2]],
    }))
    code, out, _ = run(capsys, "mask", "--graph", path, "--patches", 9, "--out", tmp_path / "k.pgm")
    assert code == 0 and out.strip() == "connection_ratio,100.00%"


def test_mask_rejects_bad_order(graph_file, tmp_path, capsys):
    code, _, err = run(capsys, "mask", "--graph", graph_file, "--patches", 16, "--order", "0,1,2",
                       "--out", tmp_path / "m.pgm")
    assert code == 2 and "permutation" in err


def test_missing_graph_file_exit_1(tmp_path, capsys):
    assert run(capsys, "measure", "--graph", tmp_path / "nope.json")[0] == 1


def test_train_importance_pipeline(graph_file, tmp_path, capsys):
    trace, ckpt, inp = tmp_path / "t.jsonl", tmp_path / "ckpt.bin", tmp_path / "x.f64"
    code, out, _ = run(capsys, "train-toy", "--graph", graph_file, "--epochs", 2, "--seed", 1,
                       "--trace", trace, "--save", ckpt)
    assert code == 0 and out.startswith("test_accuracy,")
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]
    assert set(records[0]) >= {"epoch", "new_order", "core_patch_set", "mean_alpha_top5"}
    assert sorted(records[-1]["new_order"]) == list(range(16))

    assert run(capsys, "synth-input", "--seed", 1, "--out", inp)[0] == 0
    code, out, _ = run(capsys, "importance", "--model", ckpt, "--graph", graph_file, "--input", inp)
    lines = out.splitlines()
    assert code == 0 and lines[1] == "patch,alpha" and len(lines) == 2 + 16
    code, out2, _ = run(capsys, "importance", "--model", ckpt, "--graph", graph_file, "--input", inp,
                        "--class", 2)
    assert out2.splitlines()[0] == "# class=2"


def test_sweep_outputs_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "sw"
    code, text, _ = run(capsys, "sweep", "--max-nodes", 12, "--stride", 4, "--samples", 2, "--patches", 12,
                        "--out", out)
    assert code == 0 and "failed,0" in text
    assert {p.name for p in out.iterdir()} == {
        "sweep.csv", "heatmap_toy_acc.svg", "heatmap_acc_delta.svg", "heatmap_cr.svg",
    }
    code, text, _ = run(capsys, "sweep", "--max-nodes", 3, "--stride", 1, "--samples", 1, "--patches", 3,
                        "--out", tmp_path / "sw2")
    assert code == 3
    assert run(capsys, "sweep", "--max-nodes", 16, "--patches", 8, "--out", tmp_path / "sw3")[0] == 2


def _cli(tmp_path, *argv):
    subprocess.run([sys.executable, "-m", "cpattn.cli", *map(str, argv)], cwd=tmp_path, check=True,
                   capture_output=True)


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_cli_outputs_byte_identical_across_runs(tmp_path):
    snaps = []
    for run_id in ("a", "b"):
        d = tmp_path / run_id
        d.mkdir()
        _cli(d, "generate", "--nodes", 6, "--core", 2, "--seed", 5, "--out", "g.json")
        _cli(d, "mask", "--graph", "g.json", "--patches", 12, "--out", "m.pgm", "--bitset", "m.bin")
        _cli(d, "train-toy", "--graph", "g.json", "--patches", 12, "--epochs", 1, "--trace", "t.jsonl",
             "--save", "ck.bin")
        _cli(d, "synth-input", "--patches", 12, "--out", "x.f64")
        _cli(d, "sweep", "--max-nodes", 8, "--stride", 4, "--samples", 2, "--patches", 8, "--out", "sw")
        snaps.append((_snapshot(d), _snapshot(d / "sw")))
    assert snaps[0] == snaps[1]

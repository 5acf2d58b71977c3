"""Smoke test for the pdabench_py extension.

Build and run:
    cargo build --release -p pdabench-py
    cp target/release/libpdabench_py.so python/pdabench_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pdabench_py as pb


def check_transport():
    cost = [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0]]
    plan, rows, cols, converged = pb.balanced_sinkhorn(cost, eps=0.1)
    assert converged
    assert all(abs(r - 0.5) < 1e-6 for r in rows)
    assert all(abs(c - 1.0 / 3.0) < 1e-6 for c in cols)
    _, _, _, ok = pb.unbalanced_sinkhorn(cost, tau=0.1, eta=1.0)
    assert ok
    plan, rows, cols, _ = pb.partial_ot(cost, mass=0.6, eps=0.05)
    assert abs(sum(map(sum, plan)) - 0.6) < 1e-6


def check_scorers():
    k = 4
    assert abs(pb.entropy_score([[0.0] * k] * 5) - math.log(k)) < 1e-10
    assert pb.dev_score([0.0, 1.0, 1.0, 0.0], [1.0] * 4) == 0.5
    assert pb.snd_score([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) > 0.0
    assert "ORACLE" in pb.scorer_names()


def check_training():
    spec = json.dumps({"dim": 8, "k_source": 4, "k_target": 2, "n_per_class_source": 20, "n_per_class_target": 15})
    data = pb.TaskData.synthetic(seed=2020, data_seed=1, spec_json=spec)
    assert data.target_classes == [0, 1]
    cfg = pb.TrainConfig(total_iters=40, eval_interval=20, batch_size=8, hidden=[16], bottleneck=8)
    method = pb.MethodConfig("pada", {"lambda": 0.5})
    rec = pb.train(method, cfg, data, ["ORACLE", "ENT", "100-RND"])
    assert rec.is_ok, rec
    assert rec.iterations == [0, 20, 40]
    best = rec.select_checkpoint("ORACLE")
    assert rec.target_acc[rec.iterations.index(best)] == max(rec.target_acc)
    again = pb.RunRecord.from_json(rec.to_json())
    assert again.target_acc == rec.target_acc
    try:
        pb.MethodConfig("pada", {"lambda": -1.0})
    except ValueError:
        pass
    else:
        raise AssertionError("negative lambda accepted")


def check_protocol():
    config = {
        "dataset": {"name": "tiny", "tasks": [{"id": "S2T", "seed": 1, "spec": {
            "dim": 6, "k_source": 4, "k_target": 2, "n_per_class_source": 15, "n_per_class_target": 12}}]},
        "methods": ["source_only", "pada"],
        "grids": {"pada": {"lambda": [0.1, 1.0]}},
        "seeds": [2020, 2021],
        "scorers": ["ORACLE", "ENT", "S-ACC"],
        "train": {"total_iters": 20, "eval_interval": 10, "batch_size": 8, "hidden": [8], "bottleneck": 4},
    }
    with tempfile.TemporaryDirectory() as out:
        table = pb.protocol(json.dumps(config), out)
        md = table.to_markdown()
        assert "PADA" in md and "ORACLE" in md
        assert table.seeds == [2020, 2021]
        back = pb.ReportTable.from_csv(table.to_csv())
        assert back.to_csv() == table.to_csv()
        assert os.path.exists(os.path.join(out, "report.md"))


if __name__ == "__main__":
    check_transport()
    check_scorers()
    check_training()
    check_protocol()
    print("python smoke test passed")

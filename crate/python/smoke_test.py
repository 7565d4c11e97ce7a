"""Smoke test for the keydyn Python module.

Build the extension and put it next to this script first:

    cargo build -p keydyn-py --release --features extension-module
    cp target/release/libkeydyn_py.so python/keydyn.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import keydyn  # noqa: E402


def main():
    assert keydyn.key_distance("A", "S") == 1
    assert keydyn.key_distance("Q", "P") == 9
    assert keydyn.hand_class("T", "H") == "LR"

    names = keydyn.feature_names()
    assert len(names) == 69
    assert sum(n.startswith("F1_distance_") for n in names) == 8

    auc, eer = keydyn.roc_auc_eer([0.9, 0.8, 0.7, 0.1], [True, False, True, False])
    assert math.isclose(auc, 0.75)

    with tempfile.TemporaryDirectory() as tmp:
        cohort = os.path.join(tmp, "cohort.jsonl")
        n_events = keydyn.synth_cohort(cohort, n_users=4, windows_per_user=12, seed=3)
        assert n_events == 4 * 12 * 100 * 2
        events = keydyn.read_events(cohort)
        assert len(events) == n_events

        matrix = keydyn.extract_features(cohort)
        assert len(matrix) == 48
        assert matrix.users == ["user01", "user02", "user03", "user04"]

        csv_path = os.path.join(tmp, "features.csv")
        matrix.to_csv(csv_path)
        again = keydyn.FeatureMatrix.from_csv(csv_path)
        assert again.keys() == matrix.keys()

        report = keydyn.select_features(matrix, policy="top-k:8", n_trees=50)
        assert len(report.selected) == 8
        assert dict(report.family_counts)["DEFT"] >= 1

        result = keydyn.evaluate(matrix, report.selected, folds=3, n_trees=30)
        assert 0.0 <= result.eer <= 1.0
        assert len(result.per_user()) == 4
        assert json.loads(result.to_json())["model"] == "model"
        print(result)

    x = [[float(i)] for i in range(20)]
    y = [i >= 10 for i in range(20)]
    model = keydyn.GbmModel.train(x, y, ["x"], n_trees=20)
    p = model.predict_proba([[2.0], [17.0]])
    assert p[0] < 0.5 < p[1]
    restored = keydyn.GbmModel.from_json(model.to_json())
    assert restored.predict_proba([[17.0]]) == model.predict_proba([[17.0]])

    try:
        keydyn.key_distance("A", "@@")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    print("keydyn", keydyn.__version__, "smoke test passed")


if __name__ == "__main__":
    main()

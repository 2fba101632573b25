import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from migate import metrics as met


def rec(fig, qid, category, variant, gt, pred):
    return met.ResponseRecord(fig, qid, category, variant, gt, pred)


def hand_graded_log():
    """Eight pairs whose class labels were assigned by hand.

    q1 LI (no-image probe already wrong), q2 LI (manipulated repeats the
    no-image answer), q3 VI (manipulated fails differently), q4 VI (control
    fails), q5 VI (control passes, manipulated fails), q6 Mixed (only the
    optional extra variant is wrong), q7 clean, q8 LI (uncertain on the
    no-image probe counts as wrong).
    """
    return [
        rec("fig1", "q1", "VS", "no_image", "yes", "no"),
        rec("fig1", "q1", "VS", "manipulated", "no", "no"),

        rec("fig1", "q2", "VS", "no_image", "yes", "yes"),
        rec("fig1", "q2", "VS", "manipulated", "no", "yes"),

        rec("fig2", "q3", "VS", "no_image", "yes", "yes"),
        rec("fig2", "q3", "VS", "manipulated", "no", "uncertain"),

        rec("fig2", "q4", "VD", "control", "yes", "no"),
        rec("fig2", "q4", "VD", "manipulated", "no", "no"),

        rec("fig3", "q5", "VD", "control", "yes", "yes"),
        rec("fig3", "q5", "VD", "manipulated", "no", "yes"),

        rec("fig3", "q6", "VS", "no_image", "yes", "yes"),
        rec("fig3", "q6", "VS", "manipulated", "no", "no"),
        rec("fig3", "q6", "VS", "control", "yes", "no"),

        rec("fig4", "q7", "VS", "no_image", "no", "no"),
        rec("fig4", "q7", "VS", "manipulated", "yes", "yes"),

        rec("fig5", "q8", "VS", "no_image", "yes", "uncertain"),
        rec("fig5", "q8", "VS", "manipulated", "no", "no"),
    ]


def test_classification_matches_hand_grading():
    report = met.classify_errors(hand_graded_log())
    assert report.li == 3
    assert report.vi == 3
    assert report.mixed == 1
    assert report.n_responses == 17
    assert report.n_incorrect == 7
    assert np.isclose(report.accuracy, 10 / 17)
    assert np.isclose(report.consistency, 1 / 5)  # only fig4 is fully clean


def test_uncertain_is_never_correct():
    r = rec("f", "q", "VS", "no_image", "yes", "uncertain")
    assert not r.correct


def test_consistency_standalone_agrees():
    records = hand_graded_log()
    assert met.consistency(records) == met.classify_errors(records).consistency


def test_record_field_validation():
    with pytest.raises(met.SchemaError, match="category"):
        rec("f", "q", "XX", "no_image", "yes", "no")
    with pytest.raises(met.SchemaError, match="variant"):
        rec("f", "q", "VS", "original", "yes", "no")
    with pytest.raises(met.SchemaError, match="ground_truth"):
        rec("f", "q", "VS", "no_image", "maybe", "no")
    with pytest.raises(met.SchemaError, match="prediction"):
        rec("f", "q", "VS", "no_image", "yes", "dunno")


def test_missing_required_variant_names_the_pair():
    records = [rec("fig9", "q9", "VS", "no_image", "yes", "yes")]
    with pytest.raises(met.SchemaError,
                       match=r"question q9 \(figure fig9, VS\) missing "
                             r"required variant 'manipulated'"):
        met.classify_errors(records)
    records = [rec("fig9", "q9", "VD", "manipulated", "yes", "yes")]
    with pytest.raises(met.SchemaError, match="'control'"):
        met.classify_errors(records)


def test_duplicate_variant_rejected():
    records = [
        rec("f", "q", "VS", "no_image", "yes", "yes"),
        rec("f", "q", "VS", "no_image", "yes", "no"),
    ]
    with pytest.raises(met.SchemaError, match="duplicate"):
        met.classify_errors(records)


def test_inconsistent_category_rejected():
    records = [
        rec("f", "q", "VS", "no_image", "yes", "yes"),
        rec("f", "q", "VD", "manipulated", "yes", "yes"),
    ]
    with pytest.raises(met.SchemaError, match="inconsistent category"):
        met.classify_errors(records)


def test_empty_log_rejected():
    with pytest.raises(met.SchemaError, match="empty"):
        met.classify_errors([])
    with pytest.raises(met.SchemaError, match="empty"):
        met.consistency([])


@st.composite
def response_logs(draw):
    n_pairs = draw(st.integers(1, 8))
    records = []
    for i in range(n_pairs):
        category = draw(st.sampled_from(met.CATEGORIES))
        fig = f"fig{draw(st.integers(0, 3))}"
        variants = set(met.REQUIRED_VARIANTS[category])
        if draw(st.booleans()):
            variants |= {draw(st.sampled_from(met.VARIANTS))}
        for variant in sorted(variants):
            records.append(rec(
                fig, f"q{i}", category, variant,
                draw(st.sampled_from(met.ANSWERS)),
                draw(st.sampled_from(met.PREDICTIONS))))
    return records


@settings(max_examples=80, deadline=None)
@given(records=response_logs())
def test_every_failed_pair_gets_exactly_one_class(records):
    report = met.classify_errors(records)
    failed_pairs = len({(r.figure_id, r.question_id) for r in records
                        if not r.correct})
    assert report.li + report.vi + report.mixed == failed_pairs
    assert failed_pairs <= report.n_incorrect
    assert 0.0 <= report.accuracy <= 1.0
    assert 0.0 <= report.consistency <= 1.0


# ---------------------------------------------------------------------------
# Scalar metrics

def test_delta_p_reference_value():
    got = met.delta_p(28.97, 29.77)
    assert abs(got - (-0.0268727)) < 1e-6


def test_delta_p_rejects_nonpositive_baseline():
    with pytest.raises(met.DomainError):
        met.delta_p(10.0, 0.0)
    with pytest.raises(met.DomainError):
        met.delta_p(10.0, -1.0)


def test_macro_average_reference_value():
    assert abs(met.macro_average([2.48, 1.06, 4.43]) - 2.65666667) < 1e-6
    with pytest.raises(met.DomainError):
        met.macro_average([])


def test_relative_pct_change():
    assert abs(met.relative_pct_change(0.0553, 0.2319) - 319.349) < 0.01
    assert met.relative_pct_change(0.0, 1.0) is None
    assert np.isclose(met.relative_pct_change(-2.0, -1.0), 50.0)


def test_absolute_pp_change():
    assert np.isclose(met.absolute_pp_change(28.97, 26.27), -2.7)


# ---------------------------------------------------------------------------
# Stability report

def test_stability_report_level_summary():
    report = met.stability_report(0.5, {
        ("gaussian", 1): 0.45, ("shot", 1): 0.40, ("gaussian", 2): 0.35})
    assert report.levels() == [1, 2]
    summary = report.level_summary()
    assert np.isclose(summary[1][0], np.mean([-0.1, -0.2]))
    assert np.isclose(summary[1][1], np.std([-0.1, -0.2], ddof=1))
    assert np.isclose(summary[2][0], -0.3)
    assert summary[2][1] == 0.0  # single kind: no spread to report
    d = report.as_dict()
    assert d["p_clean"] == 0.5
    assert [c["kind"] for c in d["cells"]] == ["gaussian", "gaussian", "shot"]
    assert set(d["levels"]) == {"1", "2"}


def test_stability_json(tmp_path):
    report = met.stability_report(0.8, {("impulse", 3): 0.6})
    path = str(tmp_path / "stab.json")
    met.write_stability_json(report, path)
    with open(path) as fh:
        data = json.load(fh)
    assert np.isclose(data["cells"][0]["delta_p"], -0.25)


# ---------------------------------------------------------------------------
# Delta rows

def make_report(li, vi, mixed, accuracy, consistency):
    return met.DiagnosisReport(li=li, vi=vi, mixed=mixed, accuracy=accuracy,
                               consistency=consistency, n_responses=100,
                               n_incorrect=li + vi + mixed)


def test_diagnosis_delta_row():
    clean = make_report(2, 4, 1, 0.8, 0.5)
    corrupted = make_report(3, 2, 0, 0.6, 0.25)
    row = met.diagnosis_delta_row("model-a", 0.1, clean, corrupted)
    assert row["model"] == "model-a"
    assert float(row["delta_acc_pp"]) == pytest.approx(-20.0)
    assert float(row["delta_li_pct"]) == pytest.approx(50.0)
    assert float(row["delta_vi_pct"]) == pytest.approx(-50.0)
    assert row["delta_mixed_pct"] == "-100"
    assert float(row["delta_consistency_pct"]) == pytest.approx(-50.0)


def test_diagnosis_delta_row_undefined_baseline():
    clean = make_report(0, 4, 1, 0.8, 0.5)
    corrupted = make_report(3, 2, 0, 0.6, 0.25)
    row = met.diagnosis_delta_row("m", 0.1, clean, corrupted)
    assert row["delta_li_pct"] == "undefined"


def test_delta_csv_writer(tmp_path):
    clean = make_report(2, 4, 1, 0.8, 0.5)
    corrupted = make_report(3, 2, 0, 0.6, 0.25)
    rows = [met.diagnosis_delta_row("m", 0.1, clean, corrupted)]
    path = str(tmp_path / "delta.csv")
    met.write_delta_csv(rows, path)
    with open(path, newline="") as fh:
        back = list(csv.DictReader(fh))
    assert len(back) == 1
    assert back[0]["model"] == "m"
    assert back[0]["delta_li_pct"] == "50"


def test_diagnosis_json(tmp_path):
    report = met.classify_errors(hand_graded_log())
    path = str(tmp_path / "diag.json")
    met.write_diagnosis_json(report, path)
    with open(path) as fh:
        data = json.load(fh)
    assert data["LI"] == 3 and data["VI"] == 3 and data["Mixed"] == 1


# ---------------------------------------------------------------------------
# Response log files

def test_read_response_log(tmp_path):
    path = str(tmp_path / "log.jsonl")
    with open(path, "w") as fh:
        for r in hand_graded_log():
            fh.write(json.dumps({
                "figure_id": r.figure_id, "question_id": r.question_id,
                "category": r.category, "variant": r.variant,
                "ground_truth": r.ground_truth, "prediction": r.prediction,
            }) + "\n")
    records = met.read_response_log(path)
    assert records == hand_graded_log()


def test_read_response_log_bad_json(tmp_path):
    path = str(tmp_path / "bad.jsonl")
    with open(path, "w") as fh:
        fh.write(json.dumps({"figure_id": "f", "question_id": "q",
                             "category": "VS", "variant": "no_image",
                             "ground_truth": "yes", "prediction": "no"}) + "\n")
        fh.write("{not json\n")
    with pytest.raises(met.SchemaError, match="line 2"):
        met.read_response_log(path)


def test_read_response_log_missing_field(tmp_path):
    path = str(tmp_path / "missing.jsonl")
    with open(path, "w") as fh:
        fh.write(json.dumps({"figure_id": "f", "question_id": "q"}) + "\n")
    with pytest.raises(met.SchemaError, match="line 1: missing field"):
        met.read_response_log(path)

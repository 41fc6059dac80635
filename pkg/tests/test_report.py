import csv
import json
from pathlib import Path

import pytest

from oadeval.errors import FormatError
from oadeval.report import (
    Column,
    ReportDocument,
    Table,
    metadata_table,
    read_metadata_results,
    render,
)

FIXTURES = Path(__file__).parent / "fixtures"


def _doc():
    table = Table(
        "t",
        [Column("class"), Column("n", "int"), Column("w", "raw"), Column("cAP", "pct")],
        [["a|b", 3, 1 / 3, 0.123456789], ["c", None, None, None]],
    )
    return ReportDocument("cmd", "0.0", {"split": "test"}, {"annotations": "ab" * 32}, [table])


def test_csv_six_significant_digits():
    text = render(_doc(), "csv")
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["class", "n", "w", "cAP"]
    assert rows[1] == ["a|b", "3", "0.333333", "0.123457"]
    assert rows[2] == ["c", "--", "--", "--"]


def test_markdown_one_decimal_percent():
    text = render(_doc(), "markdown")
    assert "| class | n | w | cAP (%) |" in text
    assert "| a\\|b | 3 | 0.333333 | 12.3 |" in text
    assert "| c | -- | -- | -- |" in text
    assert "sha256 abababababababab" in text


def test_json_nulls_and_stable_keys():
    payload = json.loads(render(_doc(), "json"))
    assert list(payload) == ["tool", "version", "command", "parameters", "inputs", "tables"]
    rows = payload["tables"][0]["rows"]
    assert rows[0] == {"class": "a|b", "n": 3, "w": 0.333333, "cAP": 0.123457}
    assert rows[1]["cAP"] is None


def test_render_is_deterministic():
    for fmt in ("csv", "markdown", "json"):
        assert render(_doc(), fmt) == render(_doc(), fmt)


def test_unknown_format():
    with pytest.raises(ValueError):
        render(_doc(), "xml")


def test_metadata_table_layout():
    table = metadata_table("m", ["x", "y"], [0.5, 0.75], {"atypical": [None, -0.018], "truncated_end": [0.1, 0.2]})
    assert [c.name for c in table.columns] == ["class", "Overall", "A", "L"]
    assert table.rows[-1][0] == "Mean"
    assert table.rows[-1][1] == 0.625
    assert table.rows[-1][2] == -0.018
    doc = ReportDocument("report", "0", {}, {}, [table])
    text = render(doc, "markdown")
    assert "| cAP (%) | Overall | A | L |" in text
    assert "| x | 50.0 | -- | 10.0 |" in text
    assert "| y | 75.0 | -1.8 | 20.0 |" in text
    assert "A: atypical, L: truncated_end" in text


def test_results_reader():
    models = read_metadata_results((FIXTURES / "per_class_cap.csv").read_text())
    assert list(models) == ["FV", "CNN", "LSTM"]
    names, overall, diffs = models["FV"]
    assert len(names) == 30 and names[0] == "Pick s/th up"
    assert overall[0] == 0.7
    assert diffs["atypical"][0] is None
    assert diffs["multiple_persons"][0] == -0.018


def test_recomputed_means_close_to_published():
    models = read_metadata_results((FIXTURES / "per_class_cap.csv").read_text())
    published = {row["model"]: row for row in csv.DictReader((FIXTURES / "per_class_cap_means.csv").open())}
    for model, (names, overall, diffs) in models.items():
        mean_row = metadata_table(model, names, overall, diffs).rows[-1]
        expected = [float(published[model]["overall"])] + [float(published[model][f]) for f in diffs]
        # published means come from unrounded per-class values
        assert mean_row[1:] == pytest.approx(expected, abs=0.0015)


@pytest.mark.parametrize(
    "text",
    ["", "model,class\n", "model,class,overall\nFV,x\n", "model,class,overall\nFV,x,abc\n"],
)
def test_results_reader_errors(text):
    with pytest.raises(FormatError):
        read_metadata_results(text)

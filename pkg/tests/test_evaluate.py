import json

import pytest

from textinpaint.cli import synth_one_record
from textinpaint.config import RunConfig
from textinpaint.evaluate import evaluate
from textinpaint.imgcore import write_png
from textinpaint.metrics import PSNR_CAP_DB, psnr, ssim, word_acc
from textinpaint.recognizer import ToyTemplateRecognizer


@pytest.fixture(scope="module")
def records():
    cfg = RunConfig(n_records=12, canvas_h=32, canvas_w=128,
                    ratio_lo=0.15, ratio_hi=0.5)
    return [synth_one_record(cfg, i) for i in range(12)]


@pytest.fixture(scope="module")
def recognizer():
    return ToyTemplateRecognizer()


class TestEvaluate:
    def test_ground_truth_predictions_hit_caps(self, records, recognizer):
        preds = {r.id: r.intact_image for r in records}
        report = evaluate(records, preds, recognizer)
        assert report.psnr_mean == PSNR_CAP_DB
        assert report.ssim_mean == pytest.approx(1.0, abs=1e-9)
        gt_word = word_acc([recognizer.transcribe(r.intact_image) for r in records],
                           [r.text_label for r in records])
        assert report.word_acc == pytest.approx(gt_word)

    def test_corrupted_baseline_row_semantics(self, records, recognizer):
        preds = {r.id: r.corrupted_image for r in records}
        report = evaluate(records, preds, recognizer)
        rec = records[0]
        row = next(r for r in report.rows if r["id"] == rec.id)
        assert row["psnr"] == pytest.approx(psnr(rec.intact_image, rec.corrupted_image))
        assert row["ssim"] == pytest.approx(ssim(rec.intact_image, rec.corrupted_image))
        assert row["form"] == rec.corrosion_form.value
        assert report.psnr_mean < PSNR_CAP_DB

    def test_missing_predictions_excluded_and_counted(self, records, recognizer):
        preds = {r.id: r.intact_image for r in records[:-2]}
        report = evaluate(records, preds, recognizer)
        assert report.n_missing == 2
        assert len(report.missing_ids) == 2
        assert report.psnr_mean == PSNR_CAP_DB
        error_rows = [r for r in report.rows if "error" in r]
        assert len(error_rows) == 2

    def test_permutation_invariance(self, records, recognizer):
        preds = {r.id: r.corrupted_image for r in records}
        a = evaluate(records, preds, recognizer)
        b = evaluate(list(reversed(records)), preds, recognizer)
        assert a.psnr_mean == b.psnr_mean
        assert a.ssim_mean == b.ssim_mean
        assert a.word_acc == b.word_acc
        assert a.char_acc == b.char_acc
        assert [r["id"] for r in a.rows] == [r["id"] for r in b.rows]

    def test_breakdowns_partition_records(self, records, recognizer):
        preds = {r.id: r.corrupted_image for r in records}
        report = evaluate(records, preds, recognizer)
        assert sum(s["n"] for s in report.by_form.values()) == len(records)
        forms = {r.corrosion_form.value for r in records}
        assert set(report.by_form) == forms

    def test_reads_predictions_from_directory(self, records, recognizer, tmp_path):
        for r in records:
            write_png(tmp_path / f"{r.id}.png", r.intact_image)
        report = evaluate(records, tmp_path, recognizer)
        assert report.n_missing == 0
        assert report.psnr_mean > 45.0  # PNG quantization only

    def test_report_serialization(self, records, recognizer):
        preds = {r.id: r.corrupted_image for r in records}
        report = evaluate(records, preds, recognizer)
        blob = json.loads(report.to_json())
        assert blob["n_records"] == len(records)
        table = report.to_text_table()
        assert "WordAcc" in table and "all" in table

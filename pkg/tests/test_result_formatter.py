"""
Tests para el módulo result_formatter.
"""
import csv
import io
from pathlib import Path

import pytest

from src.diffcore.gradcheck import GradCheckResult
from src.services.evaluation_service import EvalReport, evaluation_service
from src.services.result_formatter import ResultFormatter
from src.services.training_service import StepReport


@pytest.fixture
def sample_reports():
    """Dos informes de ejemplo, uno con chamfer infinito."""
    return [
        EvalReport(
            dssim={"ao": 0.1, "vh": 0.2},
            dssim_per_view={"ao": [0.1] * 10, "vh": [0.2] * 10},
            rmse=0.25,
            iou=0.5,
            chamfer=0.75,
            view_seed=0,
            views=[(0.0, 0.0)] * 10,
            label="sphere-0000",
        ),
        EvalReport(
            dssim={"ao": 0.3, "vh": 0.4},
            dssim_per_view={"ao": [0.3] * 10, "vh": [0.4] * 10},
            rmse=0.5,
            iou=0.0,
            chamfer=float("inf"),
            view_seed=0,
            views=[(0.0, 0.0)] * 10,
            label="sphere-0001",
        ),
    ]


class TestResultFormatter:
    """Tests para la clase ResultFormatter."""

    def test_format_eval_reports(self, sample_reports):
        """Test del método principal format_eval_reports."""
        summary = evaluation_service.aggregate(sample_reports)
        result = ResultFormatter.format_eval_reports(sample_reports, summary)

        assert set(result) == {"csv", "detailed_report", "summary_report"}
        assert "Informe de Evaluación" in result["detailed_report"]
        assert "sphere-0001" in result["detailed_report"]
        assert "Muestras con O vacío | 1" in result["detailed_report"]
        assert "2 muestra(s)" in result["summary_report"]

    def test_eval_csv_rows(self, sample_reports):
        """Una fila por muestra más la fila 'mean' con los agregados."""
        summary = evaluation_service.aggregate(sample_reports)
        rows = list(csv.reader(io.StringIO(ResultFormatter.eval_csv(sample_reports, summary))))

        assert rows[0] == ["label", "view_seed", "dssim_ao", "dssim_vh", "rmse", "iou", "chamfer", "chamfer_empty"]
        assert rows[1] == ["sphere-0000", "0", "0.1", "0.2", "0.25", "0.5", "0.75", "0"]
        assert rows[2][6:] == ["inf", "1"]
        assert rows[3][0] == "mean"
        assert float(rows[3][4]) == pytest.approx(0.375)
        assert rows[3][6:] == ["0.75", "1"]

    def test_eval_csv_is_deterministic(self, sample_reports):
        """El mismo informe produce el mismo texto."""
        summary = evaluation_service.aggregate(sample_reports)
        assert ResultFormatter.eval_csv(sample_reports, summary) == ResultFormatter.eval_csv(sample_reports, summary)

    def test_format_gradcheck(self):
        """Tabla con un operador por línea y recuento final."""
        results = [
            GradCheckResult("cumprod", 1e-9, 1e-4, True),
            GradCheckResult("encoder", 5e-3, 1e-3, True),
        ]
        text = ResultFormatter.format_gradcheck(results)
        lines = text.splitlines()
        assert len(lines) == 4
        assert "cumprod" in lines[1] and "OK" in lines[1]
        assert "encoder" in lines[2] and "FALLO" in lines[2]
        assert lines[-1] == "1/2 operadores por debajo de la tolerancia"

    def test_format_training_summary(self):
        """Costes inicial y final, pasos divergentes y último checkpoint."""
        reports = [
            StepReport(0, -1.4, -0.7, 10.0, 0.1, 0.2, 0.01),
            StepReport(1, -1.3, -0.6, 5.0, 0.1, 0.2, 0.01, diverged=True),
        ]
        text = ResultFormatter.format_training_summary(reports, [Path("run/checkpoint_000001.pnet")])
        assert "2 pasos" in text
        assert "10.0000 → 5.0000" in text
        assert "1 paso(s) divergente(s)" in text
        assert "checkpoint_000001.pnet" in text

    def test_format_training_summary_without_steps(self):
        """Un entrenamiento de 0 pasos solo informa del checkpoint inicial."""
        text = ResultFormatter.format_training_summary([], [Path("run/checkpoint_000000.pnet")])
        assert "0 pasos" in text
        assert "1 checkpoint(s)" in text

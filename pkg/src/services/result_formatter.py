"""
Módulo para formatear resultados de evaluación, entrenamiento y verificación de gradientes.
"""
import csv
import io
import math
from typing import Dict, List, Sequence

from src.diffcore.gradcheck import GradCheckResult
from src.services.evaluation_service import EvalReport, EvalSummary


class ResultFormatter:
    """
    Clase para formatear resultados como filas CSV e informes markdown.

    Los informes no llevan marcas de tiempo: los archivos escritos deben ser idénticos
    byte a byte entre ejecuciones con la misma semilla.
    """

    @staticmethod
    def format_eval_reports(reports: Sequence[EvalReport], summary: EvalSummary) -> Dict[str, str]:
        """
        Formatea informes de evaluación.

        Args:
            reports: Informes por muestra
            summary: Agregado de los mismos informes

        Returns:
            Dict[str, str]: "csv" (una fila por muestra más la fila agregada),
            "detailed_report" y "summary_report" en markdown
        """
        formations = sorted(summary.dssim)
        detailed_report = f"""# 📊 Informe de Evaluación

## 📋 Resumen
- **Muestras**: {summary.count}
- **Vistas por muestra**: {len(reports[0].views) if reports else 0}
- **Semillas de vista**: {", ".join(sorted({str(r.view_seed) for r in reports}))}

## 🔍 Métricas agregadas
{ResultFormatter._format_metrics_table(summary)}

## 📄 Por muestra
{ResultFormatter._format_samples_section(reports, formations)}"""

        summary_report = f"""📊 Evaluación de {summary.count} muestra(s)
{ResultFormatter._format_summary(summary)}"""

        return {
            "csv": ResultFormatter.eval_csv(reports, summary),
            "detailed_report": detailed_report,
            "summary_report": summary_report,
        }

    @staticmethod
    def eval_csv(reports: Sequence[EvalReport], summary: EvalSummary) -> str:
        """Filas: label, view_seed, dssim_<modo>..., rmse, iou, chamfer, chamfer_empty; la última es 'mean'."""
        formations = sorted(summary.dssim)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["label", "view_seed"] + [f"dssim_{name}" for name in formations] + ["rmse", "iou", "chamfer", "chamfer_empty"])
        for report in reports:
            writer.writerow(
                [report.label, report.view_seed]
                + [ResultFormatter._number(report.dssim.get(name, math.nan)) for name in formations]
                + [ResultFormatter._number(report.rmse), ResultFormatter._number(report.iou),
                   ResultFormatter._number(report.chamfer), int(report.chamfer_empty)]
            )
        writer.writerow(
            ["mean", ""]
            + [ResultFormatter._number(summary.dssim[name]) for name in formations]
            + [ResultFormatter._number(summary.rmse), ResultFormatter._number(summary.iou),
               ResultFormatter._number(summary.chamfer), summary.chamfer_empty_count]
        )
        return buffer.getvalue()

    @staticmethod
    def format_gradcheck(results: Sequence[GradCheckResult]) -> str:
        """Tabla de texto con el error relativo máximo por operador."""
        width = max([len(result.operator) for result in results] + [8])
        lines = [f"{'operador'.ljust(width)}  {'error máx':>12}  {'tolerancia':>10}  estado"]
        for result in results:
            status = "✅ OK" if result.passed else "❌ FALLO"
            lines.append(
                f"{result.operator.ljust(width)}  {result.max_relative_error:12.3e}  {result.tolerance:10.0e}  {status}"
            )
        passed = sum(result.passed for result in results)
        lines.append(f"{passed}/{len(results)} operadores por debajo de la tolerancia")
        return "\n".join(lines)

    @staticmethod
    def format_training_summary(reports: Sequence, checkpoints: Sequence, evaluation: EvalSummary = None) -> str:
        """Resumen de un entrenamiento: costes inicial/final, pasos divergentes y checkpoints."""
        if not reports:
            lines = ["🔄 Entrenamiento de 0 pasos (solo checkpoint inicial)"]
        else:
            first, last = reports[0], reports[-1]
            diverged = sum(report.diverged for report in reports)
            lines = [
                f"🔄 Entrenamiento de {len(reports)} pasos",
                f"- c_rec: {first.c_rec:.4f} → {last.c_rec:.4f}",
                f"- c_gen: {first.c_gen:.4f} → {last.c_gen:.4f}",
                f"- c_dis: {first.c_dis:.4f} → {last.c_dis:.4f}",
            ]
            if diverged:
                lines.append(f"⚠️ {diverged} paso(s) divergente(s) omitidos")
        lines.append(f"💾 {len(checkpoints)} checkpoint(s), último: {checkpoints[-1] if checkpoints else '-'}")
        if evaluation is not None:
            lines.append(ResultFormatter._format_summary(evaluation))
        return "\n".join(lines)

    @staticmethod
    def _number(value: float) -> str:
        if math.isinf(value):
            return "inf"
        if math.isnan(value):
            return ""
        return repr(float(value))

    @staticmethod
    def _format_metrics_table(summary: EvalSummary) -> str:
        """Formatea la tabla de métricas agregadas."""
        rows = ["| Métrica | Valor |", "|---|---|"]
        for name, value in sorted(summary.dssim.items()):
            rows.append(f"| DSSIM ({name}) | {value:.6f} |")
        rows.append(f"| RMSE | {summary.rmse:.6f} |")
        rows.append(f"| IoU | {summary.iou:.6f} |")
        chamfer = "∞" if math.isinf(summary.chamfer) else f"{summary.chamfer:.6f}"
        rows.append(f"| Chamfer ponderado | {chamfer} |")
        if summary.chamfer_empty_count:
            rows.append(f"| Muestras con O vacío | {summary.chamfer_empty_count} |")
        return "\n".join(rows)

    @staticmethod
    def _format_samples_section(reports: Sequence[EvalReport], formations: List[str]) -> str:
        """Formatea la sección por muestra."""
        if not reports:
            return "No hay muestras evaluadas."
        result = ""
        for report in reports:
            status = "⚠️" if report.chamfer_empty else "✅"
            dssim = ", ".join(f"{name}={report.dssim[name]:.4f}" for name in formations if name in report.dssim)
            result += f"\n{status} **{report.label or 'muestra'}**: DSSIM {dssim}; IoU={report.iou:.4f}; RMSE={report.rmse:.4f}"
        return result

    @staticmethod
    def _format_summary(summary: EvalSummary) -> str:
        """Formatea el resumen de la evaluación."""
        lines = [f"🔍 DSSIM {name}: {value:.4f}" for name, value in sorted(summary.dssim.items())]
        lines.append(f"📐 IoU {summary.iou:.4f} · RMSE {summary.rmse:.4f} · CD {summary.chamfer:.4f}")
        if summary.chamfer_empty_count:
            lines.append(f"⚠️ {summary.chamfer_empty_count} muestra(s) sin puntos en la verdad (chamfer = ∞)")
        return "\n".join(lines)

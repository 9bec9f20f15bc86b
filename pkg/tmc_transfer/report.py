"""
PDF evaluation report
Renders the MAE / RMSE comparison tables of an EvalReport with reportlab
"""

import logging
from pathlib import Path
from typing import Dict, Union
from xml.sax.saxutils import escape

import pandas as pd

from tmc_transfer.config import ensure_parent
from tmc_transfer.evaluation import EvalReport
from tmc_transfer.persistence import build_timestamp

logger = logging.getLogger(__name__)

ACCENT = "#2C5F7F"


def _table_rows(table: pd.DataFrame):
    rows = [["Model"] + list(table.columns)]
    for model, row in table.iterrows():
        rows.append([model] + ["n/a" if pd.isna(v) else f"{v:.2f}" for v in row])
    return rows


def generate_pdf_report(report: EvalReport, output_path: Union[str, Path]) -> Dict:
    """
    Write the comparison tables to a PDF

    The document is built in reportlab's invariant mode and stamped with the build
    timestamp, so equal reports give byte-identical files.

    Returns:
        Dict with 'success', 'pdf_path', 'size_kb' or 'error'
    """
    from reportlab.lib import colors
    from reportlab.lib.enums import TA_CENTER
    from reportlab.lib.pagesizes import letter
    from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
    from reportlab.lib.units import inch
    from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

    output_path = ensure_parent(Path(output_path))

    try:
        doc = SimpleDocTemplate(str(output_path), pagesize=letter, invariant=1,
                                title="TMC estimation comparison")
        story = []
        styles = getSampleStyleSheet()

        title_style = ParagraphStyle(
            'ReportTitle',
            parent=styles['Heading1'],
            fontSize=20,
            textColor=ACCENT,
            spaceAfter=20,
            alignment=TA_CENTER
        )
        heading_style = ParagraphStyle(
            'ReportHeading',
            parent=styles['Heading2'],
            fontSize=14,
            textColor=ACCENT,
            spaceAfter=10,
            spaceBefore=10
        )
        grid_style = TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor(ACCENT)),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
            ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
        ])

        story.append(Paragraph("Turning Movement Count Estimation", title_style))
        folds = report.fold_counts()
        story.append(Paragraph(
            f"<b>Protocol:</b> leave-one-intersection-out, seed {report.seed}, "
            f"{max(folds.values(), default=0)} held-out intersections", styles['Normal']))
        story.append(Spacer(1, 0.2*inch))

        for heading, table in (("MAE comparison", report.mae_table()), ("RMSE comparison", report.rmse_table())):
            story.append(Paragraph(heading, heading_style))
            grid = Table(_table_rows(table))
            grid.setStyle(grid_style)
            story.append(grid)
            story.append(Spacer(1, 0.2*inch))

        if report.failures:
            story.append(Paragraph("Failed folds", heading_style))
            for failure in report.failures[:20]:
                story.append(Paragraph(
                    escape(f"{failure['model']} / {failure['intersection_id']}: {failure['error']}"), styles['Normal']))

        story.append(Spacer(1, 0.3*inch))
        story.append(Paragraph(f"Generated: {build_timestamp()}", styles['Italic']))
        doc.build(story)

        size_kb = output_path.stat().st_size / 1024
        return {
            'success': True,
            'pdf_path': str(output_path),
            'filename': output_path.name,
            'size_kb': round(size_kb, 2)
        }

    except Exception as e:
        logger.warning("pdf report failed: %s", e)
        return {
            'success': False,
            'error': str(e)
        }

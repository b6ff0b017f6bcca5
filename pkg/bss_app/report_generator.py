"""
Printable run reports: PDF via reportlab, HTML via a Jinja2 template.
"""
from datetime import datetime
from io import BytesIO

from jinja2 import Template

from .signal_io import SeparationReport

_HTML_TEMPLATE = Template("""<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>Separation report</title></head>
<body>
  <h1>Separation report</h1>
  <p>Generated on {{ generated_on }} for {{ report.num_sources }} sources.</p>
  {% if report.per_source_sir_db %}
  <table>
    <tr><th>Source</th><th>SIR (dB)</th><th>SDR (dB)</th></tr>
    {% for sir, sdr in rows %}
    <tr><td>{{ loop.index0 }}</td><td>{{ '%.2f' % sir }}</td><td>{{ '%.2f' % sdr }}</td></tr>
    {% endfor %}
  </table>
  {% else %}
  <p>No reference signals were supplied; SIR/SDR not computed.</p>
  {% endif %}
  <h2>Stage times</h2>
  <ul>{% for name, ms in stages %}<li>{{ name }}: {{ '%.1f' % ms }} ms</li>{% endfor %}</ul>
  <h2>Configuration</h2>
  <ul>{% for key, value in config %}<li>{{ key }} = {{ value }}</li>{% endfor %}</ul>
</body>
</html>
""")


def generate_report_html(report: SeparationReport) -> str:
    return _HTML_TEMPLATE.render(
        report=report,
        rows=list(zip(report.per_source_sir_db, report.per_source_sdr_db)),
        stages=sorted(report.stage_times_ms.items()),
        config=sorted(report.config_snapshot.items()),
        generated_on=datetime.now().strftime('%Y-%m-%d %H:%M'),
    )


def generate_report_pdf(report: SeparationReport) -> BytesIO:
    """A4 summary with metric, timing and configuration tables"""
    from reportlab.lib import colors
    from reportlab.lib.pagesizes import A4
    from reportlab.lib.styles import getSampleStyleSheet
    from reportlab.lib.units import mm
    from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

    buf = BytesIO()
    doc = SimpleDocTemplate(buf, pagesize=A4, leftMargin=14*mm, rightMargin=14*mm, topMargin=16*mm, bottomMargin=16*mm)
    styles = getSampleStyleSheet()
    header_bg = colors.Color(0.92, 0.92, 0.92)
    table_style = TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), header_bg),
        ('GRID', (0, 0), (-1, -1), 0.25, colors.grey),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
    ])

    elements = [
        Paragraph('Separation report', styles['Title']),
        Paragraph(f"Generated on: {datetime.now().strftime('%Y-%m-%d %H:%M')}", styles['Normal']),
        Spacer(1, 12),
        Paragraph('Per-source quality', styles['Heading2']),
    ]

    rows = [['Source', 'SIR (dB)', 'SDR (dB)']]
    for n, (sir, sdr) in enumerate(zip(report.per_source_sir_db, report.per_source_sdr_db)):
        rows.append([str(n), f"{sir:.2f}", f"{sdr:.2f}"])
    if len(rows) == 1:
        rows.append(['-', 'no references', ''])
    elements += [Table(rows, repeatRows=1, style=table_style), Spacer(1, 12)]

    elements.append(Paragraph('Stage times', styles['Heading2']))
    stage_rows = [['Stage', 'Wall-clock (ms)']]
    stage_rows += [[name, f"{ms:.1f}"] for name, ms in sorted(report.stage_times_ms.items())]
    if len(stage_rows) == 1:
        stage_rows.append(['-', 'not recorded'])
    elements += [Table(stage_rows, repeatRows=1, style=table_style), Spacer(1, 12)]

    elements.append(Paragraph('Configuration', styles['Heading2']))
    config_rows = [['Key', 'Value']] + [[k, str(v)] for k, v in sorted(report.config_snapshot.items())]
    elements.append(Table(config_rows, repeatRows=1, style=table_style))

    doc.build(elements)
    buf.seek(0)
    return buf

import csv
import io
import json
import os
import sys

from utils.errors import ReportError

FIELDNAMES = ['inv_eps', 'iter', 'time_sec', 'f_best', 'g_out', 'productive', 'nonproductive']
ERROR_MARKER = 'error'


def _as_dict(row):
    return row.to_dict() if hasattr(row, 'to_dict') else dict(row)


def _format_inv_eps(value):
    value = float(value)
    return str(int(value)) if value.is_integer() else f"{value:g}"


def _csv_row(record):
    if record.get('error'):
        return {'inv_eps': _format_inv_eps(record['inv_eps']), 'iter': ERROR_MARKER, 'time_sec': '',
                'f_best': '', 'g_out': '', 'productive': '', 'nonproductive': ''}
    return {
        'inv_eps': _format_inv_eps(record['inv_eps']),
        'iter': int(record['iter']),
        'time_sec': f"{record['time_sec']:.6f}",
        'f_best': f"{record['f_best']:.6f}",
        'g_out': f"{record['g_out']:.6f}",
        'productive': int(record['productive']),
        'nonproductive': int(record['nonproductive']),
    }


def emit_report(rows, fmt='csv'):
    """Serialises bench rows as CSV (6 decimals) or a JSON array (full precision)."""
    records = [_as_dict(row) for row in rows]
    if fmt == 'json':
        out = []
        for record in records:
            item = {key: record.get(key) for key in FIELDNAMES}
            if record.get('error'):
                item['error'] = record['error']
            out.append(item)
        return json.dumps(out, indent=4)
    if fmt != 'csv':
        raise ReportError(f"Unknown report format '{fmt}'")

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=FIELDNAMES, lineterminator='\n')
    writer.writeheader()
    for record in records:
        writer.writerow(_csv_row(record))
    return buffer.getvalue()


def _write_text(text, path):
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            f.write(text)
    except OSError as e:
        raise ReportError(f"Cannot write to {path}: {e}") from e


def write_report(rows, fmt='csv', path=None):
    """Writes the report to path, or to stdout when no path is given."""
    text = emit_report(rows, fmt)
    if fmt == 'json':
        text += '\n'
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return text
    _write_text(text, path)
    return text


def write_trace(lines, path):
    """One line per step: k,kind,h,g_value."""
    _write_text(''.join(f"{line}\n" for line in lines), path)

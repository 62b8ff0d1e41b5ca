"""
AirFC Simulator - Excel Export Module
=====================================

Exports sweep results to an Excel review workbook with four sheets:

1. **session_summary** — Key-value rows from the last performance-log session
2. **metadata** — Resolved config echo (dB and linear values), trend flags
3. **aggregate** — One row per sweep point (and scheme) with mean/std columns
4. **detail** — One row per point x seed (x scheme)

Features:
- Excel table formatting with filters and a black header row
- Conditional formatting on status / trend-flag cells
- Auto-sized columns, gridlines off

Usage (from main.py):
    from shared_modules.excel_export import export_to_excel
    export_to_excel(
        output_path="output_data/pmax_sweep/review.xlsx",
        detail=detail_df,
        aggregate=aggregate_df,
        metadata=metadata_dict,
        flags=trend_flags,
        perf_log_dir="output_data/pmax_sweep/performance_logs",
    )
"""

import json
import os
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from openpyxl.formatting.rule import FormulaRule
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.table import Table, TableStyleInfo


def _style_header_row(ws, max_col: int) -> None:
    header_font = Font(color="FFFFFF", bold=True)
    header_fill = PatternFill(start_color="000000", end_color="000000", fill_type="solid")
    header_align = Alignment(horizontal="left", vertical="top", wrap_text=False)

    for col_idx in range(1, max_col + 1):
        cell = ws.cell(row=1, column=col_idx)
        cell.font = header_font
        cell.fill = header_fill
        cell.alignment = header_align


def _apply_table_formatting(writer, sheet_name: str, df: pd.DataFrame) -> None:
    """
    Convert the written range to a named Excel table (filters, row stripes)
    and auto-size columns (capped at 50).
    """
    worksheet = writer.sheets[sheet_name]
    max_row = len(df) + 1
    max_col = len(df.columns)
    if max_col == 0:
        return
    _style_header_row(worksheet, max_col)

    if len(df) > 0:
        table_range = f"A1:{get_column_letter(max_col)}{max_row}"
        tab = Table(displayName=f"Table_{sheet_name}", ref=table_range)
        tab.tableStyleInfo = TableStyleInfo(
            name="TableStyleLight8",
            showFirstColumn=False,
            showLastColumn=False,
            showRowStripes=True,
            showColumnStripes=True,
        )
        worksheet.add_table(tab)

    for idx, col in enumerate(df.columns, 1):
        lengths = df[col].astype(str).map(len)
        max_length = min(max(int(lengths.max()) if len(lengths) else 0, len(str(col))) + 2, 50)
        worksheet.column_dimensions[get_column_letter(idx)].width = max_length

    top_left_no_wrap = Alignment(horizontal="left", vertical="top", wrap_text=False)
    for row in worksheet.iter_rows(min_row=2, max_row=max_row, min_col=1, max_col=max_col):
        for cell in row:
            cell.alignment = top_left_no_wrap


def _formula_literal(value) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    return f'"{value}"'


def _apply_conditional_formatting(writer, sheet_name: str, df: pd.DataFrame, column: str,
                                  ok_value, bad_value) -> None:
    """Green for ok_value, red for bad_value (Excel-native rules, survive edits). Booleans match TRUE/FALSE cells."""
    if column not in df.columns or len(df) == 0:
        return
    ws = writer.sheets[sheet_name]
    letter = get_column_letter(list(df.columns).index(column) + 1)
    rng = f"{letter}2:{letter}{len(df) + 1}"
    ok_fill = PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid")
    bad_fill = PatternFill(start_color="FFC7CE", end_color="FFC7CE", fill_type="solid")
    ws.conditional_formatting.add(rng, FormulaRule(formula=[f"{letter}2={_formula_literal(ok_value)}"], fill=ok_fill))
    ws.conditional_formatting.add(rng, FormulaRule(formula=[f"{letter}2={_formula_literal(bad_value)}"], fill=bad_fill))


def _disable_gridlines(writer) -> None:
    for ws in writer.book.worksheets:
        ws.sheet_view.showGridLines = False


def _read_last_jsonl_line(path: str) -> dict:
    """Return the last non-empty JSON object from a JSONL file, or {} if missing/unreadable."""
    if not os.path.exists(path):
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            last = {}
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    last = json.loads(line)
                except json.JSONDecodeError:
                    continue
            return last
    except OSError:
        return {}


def _flatten(d: Dict, prefix: str = "") -> Dict[str, object]:
    """Nested dict -> dotted keys (lists rendered as JSON text)."""
    out: Dict[str, object] = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, f"{name}."))
        elif isinstance(value, list):
            out[name] = json.dumps(value, default=str)
        else:
            out[name] = value
    return out


def _build_session_summary_df(perf_log_dir: Optional[str]) -> pd.DataFrame:
    if not perf_log_dir:
        return pd.DataFrame(columns=["key", "value"])
    last = _read_last_jsonl_line(os.path.join(perf_log_dir, "log_session.jsonl"))
    return pd.DataFrame([{"key": k, "value": v} for k, v in _flatten(last).items()], columns=["key", "value"])


def _build_metadata_df(metadata: Dict, flags: List[str]) -> pd.DataFrame:
    rows = [{"key": k, "value": v} for k, v in _flatten(metadata).items()]
    rows.append({"key": "trend_flags.count", "value": len(flags)})
    rows.append({"key": "trend_flags.status", "value": "OK" if not flags else "FLAGGED"})
    for i, flag in enumerate(flags, 1):
        rows.append({"key": f"trend_flags.{i}", "value": flag})
    return pd.DataFrame(rows, columns=["key", "value"])


def export_to_excel(
    output_path: str,
    detail: pd.DataFrame,
    aggregate: pd.DataFrame,
    metadata: Dict,
    flags: Optional[List[str]] = None,
    perf_log_dir: Optional[str] = None,
) -> None:
    """
    Write the review workbook.

    Raises:
        ValueError: If output path is not .xlsx
    """
    output_path = Path(output_path)
    if output_path.suffix.lower() != ".xlsx":
        raise ValueError(f"Output path must be .xlsx file, got: {output_path}")
    output_path.parent.mkdir(parents=True, exist_ok=True)
    flags = flags or []

    df_session = _build_session_summary_df(perf_log_dir)
    df_meta = _build_metadata_df(metadata, flags)

    with pd.ExcelWriter(output_path, engine="openpyxl") as writer:
        df_session.to_excel(writer, sheet_name="session_summary", index=False)
        df_meta.to_excel(writer, sheet_name="metadata", index=False)
        aggregate.to_excel(writer, sheet_name="aggregate", index=False)
        detail.to_excel(writer, sheet_name="detail", index=False)

        _apply_table_formatting(writer, "session_summary", df_session)
        _apply_table_formatting(writer, "metadata", df_meta)
        _apply_table_formatting(writer, "aggregate", aggregate)
        _apply_table_formatting(writer, "detail", detail)

        _apply_conditional_formatting(writer, "metadata", df_meta, "value", "OK", "FLAGGED")
        _apply_conditional_formatting(writer, "detail", detail, "converged", True, False)
        _disable_gridlines(writer)

    print(f"✓ Excel export: {output_path}")
    print(f"  - detail: {len(detail)} row(s)")
    print(f"  - aggregate: {len(aggregate)} row(s)")
    print(f"  - metadata: {len(flags)} trend flag(s)")

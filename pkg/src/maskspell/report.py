"""Evaluation reports: per-condition error rates, error-type breakdown, RTF.

A report is written three ways: a human-readable table, a machine JSON
document (schema-versioned, containing every number the table prints),
and a tab-delimited file.  The same prefix also receives rendered figures
comparing the conditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

REPORT_SCHEMA = 1


@dataclass(frozen=True)
class ConditionRow:
    condition: str
    error_rate: float
    oracle_error_rate: float | None
    sub_proportion: float
    ins_proportion: float
    del_proportion: float
    wall_seconds: float
    total_audio_seconds: float

    @property
    def rtf(self) -> float:
        if self.total_audio_seconds > 0:
            return self.wall_seconds / self.total_audio_seconds
        return 0.0


@dataclass(frozen=True)
class RunReport:
    corpus_id: str
    unit: str
    rows: tuple[ConditionRow, ...]

    def to_payload(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "corpus": self.corpus_id,
            "unit": self.unit,
            "rows": [
                {
                    "condition": r.condition,
                    "error_rate": r.error_rate,
                    "oracle_error_rate": r.oracle_error_rate,
                    "sub_proportion": r.sub_proportion,
                    "ins_proportion": r.ins_proportion,
                    "del_proportion": r.del_proportion,
                    "wall_seconds": r.wall_seconds,
                    "total_audio_seconds": r.total_audio_seconds,
                    "rtf": r.rtf,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RunReport":
        if payload.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema: {payload.get('schema')!r}")
        rows = tuple(
            ConditionRow(
                condition=r["condition"],
                error_rate=r["error_rate"],
                oracle_error_rate=r["oracle_error_rate"],
                sub_proportion=r["sub_proportion"],
                ins_proportion=r["ins_proportion"],
                del_proportion=r["del_proportion"],
                wall_seconds=r["wall_seconds"],
                total_audio_seconds=r["total_audio_seconds"],
            )
            for r in payload["rows"]
        )
        return cls(corpus_id=payload["corpus"], unit=payload["unit"], rows=rows)


def render_table(report: RunReport) -> str:
    headers = ["condition", "err_rate", "oracle", "S%", "I%", "D%", "wall_s", "audio_s", "rtf"]
    lines = []
    rows = []
    for r in report.rows:
        rows.append(
            [
                r.condition,
                f"{r.error_rate:.4f}",
                "-" if r.oracle_error_rate is None else f"{r.oracle_error_rate:.4f}",
                f"{100 * r.sub_proportion:.1f}",
                f"{100 * r.ins_proportion:.1f}",
                f"{100 * r.del_proportion:.1f}",
                f"{r.wall_seconds:.3f}",
                f"{r.total_audio_seconds:.1f}",
                f"{r.rtf:.6f}",
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    lines.append(f"unit: {report.unit}   corpus: {report.corpus_id}")
    return "\n".join(lines)


def write_json(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_payload(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_json(path: str | Path) -> RunReport:
    return RunReport.from_payload(json.loads(Path(path).read_text(encoding="utf-8")))


def write_tsv(report: RunReport, path: str | Path) -> None:
    columns = [
        "condition", "error_rate", "oracle_error_rate", "sub_proportion",
        "ins_proportion", "del_proportion", "wall_seconds", "total_audio_seconds", "rtf",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for r in report.rows:
            values = [
                r.condition,
                repr(r.error_rate),
                "" if r.oracle_error_rate is None else repr(r.oracle_error_rate),
                repr(r.sub_proportion),
                repr(r.ins_proportion),
                repr(r.del_proportion),
                repr(r.wall_seconds),
                repr(r.total_audio_seconds),
                repr(r.rtf),
            ]
            fh.write("\t".join(values) + "\n")


def write_figures(report: RunReport, prefix: str | Path) -> list[Path]:
    """Render comparison figures next to the delimited output.

    One figure compares error rates (with oracle rates where present);
    the other shows the substitution/insertion/deletion composition per
    condition.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    prefix = Path(prefix)
    conditions = [r.condition for r in report.rows]
    x = range(len(conditions))

    rates_path = prefix.with_name(prefix.name + "_rates.png")
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(conditions)), 3.2))
    ax.bar([i - 0.18 for i in x], [r.error_rate for r in report.rows], width=0.36, label="selected")
    oracle = [r.oracle_error_rate for r in report.rows]
    if any(o is not None for o in oracle):
        ax.bar(
            [i + 0.18 for i in x],
            [0.0 if o is None else o for o in oracle],
            width=0.36,
            label="oracle",
        )
        ax.legend(frameon=False)
    ax.set_xticks(list(x), conditions, rotation=20, ha="right")
    ax.set_ylabel(f"{report.unit} error rate")
    fig.tight_layout()
    fig.savefig(rates_path, dpi=150)
    plt.close(fig)

    sid_path = prefix.with_name(prefix.name + "_sid.png")
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(conditions)), 3.2))
    subs = [r.sub_proportion for r in report.rows]
    ins = [r.ins_proportion for r in report.rows]
    dels = [r.del_proportion for r in report.rows]
    ax.bar(x, subs, label="S")
    ax.bar(x, ins, bottom=subs, label="I")
    ax.bar(x, dels, bottom=[s + i for s, i in zip(subs, ins)], label="D")
    ax.set_xticks(list(x), conditions, rotation=20, ha="right")
    ax.set_ylabel("error composition")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(sid_path, dpi=150)
    plt.close(fig)

    return [rates_path, sid_path]

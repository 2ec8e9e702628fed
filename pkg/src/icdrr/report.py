"""Text and figure renderings of evaluation results."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import ComparisonRow, EvalRecord, EvalSummary, System  # noqa: E402

SYSTEM_LABELS = {
    System.RETRIEVE_RANK: "Retrieve-Rank System",
    System.VANILLA: "Vanilla LLM",
}

_STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%".replace(".0%", "%")


def format_accuracy_table(summary: EvalSummary) -> str:
    """Accuracy per system: exact (headline) and category."""
    head = f"Accuracy Results (n={summary.n}" + (f", seed={summary.seed})" if summary.seed is not None else ")")
    rows = [("System", "Accuracy", "Category accuracy", "Fallbacks", "No code")]
    for system, s in summary.per_system.items():
        rows.append((SYSTEM_LABELS[system], _pct(s.exact_accuracy), _pct(s.category_accuracy),
                     str(s.fallbacks), str(s.no_code)))
    return head + "\n" + _grid(rows)


def format_comparison_table(rows: Sequence[ComparisonRow], width: int = 60) -> str:
    out = [("Diagnosis Description", "Reference Code", "Retrieve-Rank", "Vanilla", "Correct System")]
    for r in rows:
        desc = r.condition if len(r.condition) <= width else r.condition[: width - 3] + "..."
        out.append((
            desc,
            r.reference.normalized,
            r.retrieve_rank.normalized if r.retrieve_rank else "-",
            r.vanilla.normalized if r.vanilla else "-",
            r.correct_system,
        ))
    return "Comparison of Predictions\n" + _grid(out)


def _grid(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([rule, fmt(rows[0]), rule, *(fmt(r) for r in rows[1:]), rule])


def plot_accuracy(summary: EvalSummary, path) -> Path:
    """Grouped bars: exact and category accuracy for each system."""
    path = Path(path)
    systems = list(summary.per_system)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        width = 0.38
        xs = range(len(systems))
        exact = [summary.per_system[s].exact_accuracy * 100 for s in systems]
        cat = [summary.per_system[s].category_accuracy * 100 for s in systems]
        b1 = ax.bar([x - width / 2 for x in xs], exact, width, label="exact code", color="#33658a")
        b2 = ax.bar([x + width / 2 for x in xs], cat, width, label="category", color="#86bbd8")
        for bars in (b1, b2):
            ax.bar_label(bars, fmt="%.0f", padding=2, fontsize=7)
        ax.set_xticks(list(xs), [SYSTEM_LABELS[s] for s in systems])
        ax.set_ylim(0, 110)
        ax.set_ylabel("accuracy (%)")
        ax.set_title(f"Top-1 accuracy, n={summary.n}")
        ax.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_outcomes(records: Sequence[EvalRecord], path) -> Path:
    """Stacked share of exact hits, category-only hits, misses and missing codes."""
    path = Path(path)
    systems = [s for s in System if any(r.system is s for r in records)]
    kinds = [
        ("exact", "#2a9d8f", lambda r: r.exact_match),
        ("category only", "#e9c46a", lambda r: r.category_match and not r.exact_match),
        ("wrong category", "#e76f51", lambda r: r.predicted_code is not None and not r.category_match),
        ("no code", "#8d99ae", lambda r: r.predicted_code is None),
    ]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.4))
        left = [0.0] * len(systems)
        for label, color, pred in kinds:
            share = []
            for s in systems:
                rows = [r for r in records if r.system is s]
                share.append(100 * sum(map(pred, rows)) / len(rows))
            ax.barh(range(len(systems)), share, left=left, color=color, label=label)
            left = [a + b for a, b in zip(left, share)]
        ax.set_yticks(range(len(systems)), [SYSTEM_LABELS[s] for s in systems])
        ax.set_xlim(0, 100)
        ax.set_xlabel("share of queries (%)")
        ax.legend(frameon=False, ncol=4, loc="lower center", bbox_to_anchor=(0.5, 1.0), fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def render_figures(summary: EvalSummary, records: Sequence[EvalRecord], outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        plot_accuracy(summary, outdir / "accuracy.png"),
        plot_outcomes(records, outdir / "outcomes.png"),
    ]

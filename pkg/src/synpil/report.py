"""Training metrics reports, confusion tables, and figure rendering.

The report format is one metric per line, name and value separated by a
tab. Values are written with Python's shortest round-trip float repr so
a report never loses precision over what was measured.

Figures are optional and rendered with matplotlib's file-only backend;
the import happens lazily so headless use without figures never touches
matplotlib.
"""

import os

import numpy as np

from .errors import DimensionError
from .synergy import SynergeticModel, SystemStats


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def training_report_lines(sm: SynergeticModel, stats: SystemStats) -> list[str]:
    """Flatten a training run into name<TAB>value lines."""
    if len(stats.members) != len(sm.members):
        raise DimensionError(
            f"stats cover {len(stats.members)} members, model has {len(sm.members)}"
        )
    lines = [
        f"n_members\t{len(sm.members)}",
        f"final_val_accuracy\t{_fmt(stats.final_val_accuracy)}",
        f"total_seconds\t{_fmt(stats.total_seconds)}",
    ]
    for i, (member, ms) in enumerate(zip(sm.members, stats.members)):
        prefix = f"member{i}"
        lines.append(f"{prefix}.n_train_samples\t{ms.n_train_samples}")
        lines.append(f"{prefix}.depth\t{member.forward.depth}")
        lines.append(f"{prefix}.val_accuracy\t{_fmt(ms.val_accuracy)}")
        for k, acc in enumerate(member.forward.probe_accuracies, start=1):
            lines.append(f"{prefix}.probe_accuracy.depth{k}\t{_fmt(acc)}")
        lines.append(f"{prefix}.seconds.forward\t{_fmt(ms.seconds_forward)}")
        lines.append(f"{prefix}.seconds.backward\t{_fmt(ms.seconds_backward)}")
        lines.append(f"{prefix}.seconds.fusion\t{_fmt(ms.seconds_fusion)}")
    return lines


def write_report(lines: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_report(path) -> dict[str, str]:
    """Read a name<TAB>value report back into a dict (values as strings)."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            name, _, value = line.partition("\t")
            out[name] = value
    return out


def confusion_matrix(
    true_labels: list[str], predicted_labels: list[str], class_names
) -> np.ndarray:
    """Counts with one row per true class and one column per prediction."""
    if len(true_labels) != len(predicted_labels):
        raise DimensionError(
            f"{len(true_labels)} true labels vs "
            f"{len(predicted_labels)} predictions"
        )
    index = {name: i for i, name in enumerate(class_names)}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[index[t], index[p]] += 1
    return counts


def format_confusion(counts: np.ndarray, class_names) -> str:
    """Fixed-width text table: rows are true classes, columns predictions."""
    names = [str(n) for n in class_names]
    if counts.shape != (len(names), len(names)):
        raise DimensionError(
            f"confusion shape {counts.shape} does not match "
            f"{len(names)} class names"
        )
    width = max(
        [len("true\\pred")]
        + [len(n) for n in names]
        + [len(str(int(v))) for v in counts.ravel()]
    )
    header = "  ".join(["true\\pred".ljust(width)] + [n.rjust(width) for n in names])
    rows = [header]
    for name, row in zip(names, counts):
        cells = [str(int(v)).rjust(width) for v in row]
        rows.append("  ".join([name.ljust(width)] + cells))
    return "\n".join(rows)


def _figure_path(report_path, suffix: str) -> str:
    stem, _ = os.path.splitext(str(report_path))
    return f"{stem}_{suffix}.png"


def render_training_figures(
    sm: SynergeticModel, stats: SystemStats, report_path
) -> list[str]:
    """Render depth-probe and member-accuracy figures next to the report.

    Returns the paths written.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for i, member in enumerate(sm.members):
        accs = member.forward.probe_accuracies
        depths = np.arange(1, len(accs) + 1)
        (line,) = ax.plot(depths, accs, marker="o", label=f"member {i}")
        chosen = member.forward.depth
        ax.plot(
            [chosen],
            [accs[chosen - 1]],
            marker="*",
            markersize=14,
            color=line.get_color(),
            linestyle="none",
        )
    ax.set_xlabel("depth")
    ax.set_ylabel("probe validation accuracy")
    ax.set_title("depth selection (star = chosen)")
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    path = _figure_path(report_path, "probe_accuracy")
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(stats.members))
    ax.bar(xs, [m.val_accuracy for m in stats.members], color="#4878a8")
    ax.axhline(
        stats.final_val_accuracy,
        color="#a84848",
        linestyle="--",
        label=f"ensemble: {stats.final_val_accuracy:.4f}",
    )
    ax.set_xticks(xs)
    ax.set_xticklabels([f"m{i}" for i in xs])
    ax.set_xlabel("member")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("member vs ensemble accuracy")
    ax.legend(loc="lower right", fontsize="small")
    path = _figure_path(report_path, "member_accuracy")
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    return paths

"""Figure rendering for the report paths. Files only, no interactive UI."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_metrics_figure(report, out_path, label: str = "run") -> None:
    """Bar chart of the macro-averaged metrics of one evaluation."""
    names = report.metric_names()
    values = [report.macro[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(names)), 3.2))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("macro value")
    ax.set_title(f"{label} ({report.query_count} queries)")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_fid_histogram(histogram: dict[int, int], out_path) -> None:
    """Distribution of how many paths each file identity accumulated."""
    sizes = sorted(histogram)
    counts = [histogram[s] for s in sizes]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(sizes, counts, color="#4878a8")
    ax.set_xlabel("paths per file identity")
    ax.set_ylabel("identities")
    if counts:
        ax.set_yscale("log" if max(counts) > 50 else "linear")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)

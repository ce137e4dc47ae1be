"""PNG renderings of the delimited reports, written beside the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import METRIC_NAMES

ARM_ORDER = ("base", "ftc", "ftc_tg", "ftc_tg_pi")


def render_training_curves(rows: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = [r["step"] for r in rows]
    for key, style in (("l_qa", "-"), ("l_ret", "--"), ("l_policy", ":"),
                       ("total", "-")):
        ax.plot(steps, [r[key] for r in rows], style, label=key,
                linewidth=1.8 if key == "total" else 1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss components")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_report(rows: list[tuple[str, str, float]], path) -> None:
    splits = sorted({r[0] for r in rows})
    values = {(s, m): v for s, m, v in rows}
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(splits), 1)
    for si, split in enumerate(splits):
        xs = [i + si * width for i in range(len(METRIC_NAMES))]
        ax.bar(xs, [values.get((split, m), 0.0) for m in METRIC_NAMES],
               width=width, label=split)
    ax.set_xticks([i + width * (len(splits) - 1) / 2 for i in range(len(METRIC_NAMES))])
    ax.set_xticklabels(METRIC_NAMES, rotation=15)
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.set_title("evaluation metrics by split")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench(rows: list[dict], path) -> None:
    arms = sorted({r["arm"] for r in rows})
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    panels = (("visual_tokens", "visual tokens", True),
              ("arena_bytes", "tensor arena bytes", True),
              ("runtime_seconds", "runtime (s)", True),
              ("k_acc", "K-ACC (%)", False))
    for ax, (key, label, log) in zip(axes.flat, panels):
        for arm in arms:
            pts = sorted((r["frames"], r[key]) for r in rows if r["arm"] == arm)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=arm)
        ax.set_xlabel("input frames")
        ax.set_ylabel(label)
        ax.set_xscale("log", base=2)
        if log:
            ax.set_yscale("log")
        else:
            ax.set_ylim(0, 105)
        ax.legend()
    fig.suptitle("scalability with increasing input frames")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation(rows: list[dict], path) -> None:
    splits = sorted({r["split"] for r in rows})
    arms = [a for a in ARM_ORDER if any(r["arm"] == a for r in rows)]
    fig, axes = plt.subplots(1, len(splits), figsize=(4.5 * len(splits), 4),
                             squeeze=False)
    values = {(r["arm"], r["split"], r["metric"]): r["value"] for r in rows}
    width = 0.8 / len(METRIC_NAMES)
    for ax, split in zip(axes[0], splits):
        for mi, metric in enumerate(METRIC_NAMES):
            xs = [i + mi * width for i in range(len(arms))]
            ax.bar(xs, [values.get((arm, split, metric), 0.0) for arm in arms],
                   width=width, label=metric)
        ax.set_xticks([i + width * (len(METRIC_NAMES) - 1) / 2
                       for i in range(len(arms))])
        ax.set_xticklabels(arms, rotation=15)
        ax.set_ylim(0, 105)
        ax.set_title(split)
    axes[0][0].set_ylabel("score (%)")
    axes[0][-1].legend(fontsize=8)
    fig.suptitle("component ablation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

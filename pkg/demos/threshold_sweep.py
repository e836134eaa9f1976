"""Sweep the alarm threshold and render the trade-off as an HTML report.

Trains the same compact model as train_and_detect.py, then evaluates the
full 19-point threshold grid.  Lower thresholds fire earlier but false-alarm
more; the sweep table makes the monotone trade-off visible.  The CSV is also
rendered to a self-contained HTML page with inline SVG charts.

Run:  python3 demos/threshold_sweep.py
"""

import tempfile
from pathlib import Path

from sentinel.data import scan_dataset
from sentinel.evaluate import (
    default_threshold_grid,
    median_reaction,
    threshold_sweep,
    write_sweep_csv,
)
from sentinel.nn import ModelSpec
from sentinel.preprocess import PreprocessConfig, preprocess_pipeline
from sentinel.report import render_csv, render_index
from sentinel.synth import SynthConfig, generate_dataset
from sentinel.train import TrainConfig, fit

SEED = 7


def main():
    workdir = Path(tempfile.mkdtemp(prefix="sweep_demo_"))
    cfg = SynthConfig(
        n_syncope=14,
        n_nosyncope=14,
        length_range=(1100, 1300),
        onset_lead=300,
        noise_coef=0.9,
        bp_drop_fraction=0.35,
        hr_rise_fraction=0.18,
        hr_drop_fraction=0.30,
        seed=SEED,
    )
    generate_dataset(cfg, workdir)
    catalog = scan_dataset(workdir)
    split, _ = preprocess_pipeline(
        catalog, PreprocessConfig(train_fraction=0.75), seed=SEED)
    spec = ModelSpec(num_layers=1, units=[12], bidirectional=True,
                     window_size=60)
    tcfg = TrainConfig(window_size=60, epochs=30, stride=40,
                       positive_horizon=300, batch_size=16, seed=SEED)
    model, _, _ = fit(split, spec, tcfg)

    grid = default_threshold_grid()
    reports = threshold_sweep(model, split.test, grid)
    print(f"{'thr':>5s} {'recall':>7s} {'precision':>9s} {'F1':>6s} "
          f"{'acc':>6s} {'dets':>5s} {'median reaction':>16s}")
    for rep in reports:
        c = rep.confusion
        med = median_reaction(rep)
        print(f"{rep.threshold:5.2f} "
              f"{'-' if rep.recall is None else f'{rep.recall:7.3f}'} "
              f"{'-' if rep.precision is None else f'{rep.precision:9.3f}'} "
              f"{'-' if rep.f_beta is None else f'{rep.f_beta:6.3f}'} "
              f"{rep.accuracy:6.3f} {c.tp + c.fp:5d} "
              f"{'-' if med is None else f'{med:13.0f}s'}")

    out = workdir / "report"
    out.mkdir()
    csv_path = out / "sweep.csv"
    write_sweep_csv(reports, csv_path)
    rendered = render_csv(csv_path)
    assert rendered is not None
    title, svg = rendered
    (out / "sweep.svg").write_text(svg)
    (out / "index.html").write_text(render_index([(title, svg)]))
    print(f"\nwrote {csv_path}")
    print(f"wrote {out / 'index.html'} (open in a browser)")


if __name__ == "__main__":
    main()

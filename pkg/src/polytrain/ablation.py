"""Four-arm ablation over boundary loss and gradient clipping."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .errors import ParameterError
from .stats import two_proportion_ztest
from .training import TrainingConfig, train, write_run

# arm name -> (boundary loss on, clip mode)
ARMS = {
    "baseline": (False, "none"),
    "boundary_only": (True, "none"),
    "clip_only": (False, "all"),
    "proposed": (True, "selective"),
}


@dataclass
class AblationResult:
    seeds: list
    reports: dict = field(default_factory=dict)  # (arm, seed) -> RunReport
    floors: dict = field(default_factory=dict)  # seed -> accuracy floor
    reference: dict = field(default_factory=dict)  # seed -> ReLU reference RunReport

    def success(self, arm: str, seed: int) -> bool:
        r = self.reports[(arm, seed)]
        return (not r.diverged) and r.final_val_accuracy is not None and r.final_val_accuracy >= self.floors[seed]

    def success_count(self, arm: str) -> int:
        return sum(self.success(arm, s) for s in self.seeds)

    def ztests(self, against: str = "proposed") -> dict:
        n = len(self.seeds)
        k0 = self.success_count(against)
        out = {}
        for arm in ARMS:
            if arm == against:
                continue
            z, p = two_proportion_ztest(k0, n, self.success_count(arm), n)
            out[arm] = {"z": z, "p": p}
        return out

    def summary(self) -> dict:
        n = len(self.seeds)
        return {
            "seeds": list(self.seeds),
            "floors": {str(s): f for s, f in self.floors.items()},
            "arms": {
                arm: {
                    "successes": self.success_count(arm),
                    "runs": n,
                    "diverged": sum(self.reports[(arm, s)].diverged for s in self.seeds),
                }
                for arm in ARMS
            },
            "ztest_vs_proposed": self.ztests(),
        }


def _run(config: TrainingConfig):
    return train(config)


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("POLYTRAIN_THREADS", "1"))
    return max(1, threads)


def ablate(base: TrainingConfig, seeds, threads: int | None = None, keep_models: bool = False):
    """Train every arm on every seed.

    Arms share the seed, hence the same initialization, data and batch order;
    they differ only in the boundary-loss flag and the clip mode. When
    ``base.success_floor`` is unset, each seed's floor is ``floor_ratio``
    times the validation accuracy of a ReLU reference run on that seed.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ParameterError("ablation needs at least two seeds")
    jobs = []
    for seed in seeds:
        cfg = TrainingConfig.from_dict({**base.to_dict(), "seed": seed})
        for arm, (bnd, clip) in ARMS.items():
            jobs.append(((arm, seed), cfg.with_arm(bnd, clip)))
        if base.success_floor is None:
            jobs.append((("relu_reference", seed), cfg.relu_reference()))
    workers = _threads(threads)
    if workers == 1:
        outputs = [_run(cfg) for _, cfg in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run, [cfg for _, cfg in jobs]))

    result = AblationResult(seeds)
    models = {}
    for (key, _), (report, model) in zip(jobs, outputs):
        if key[0] == "relu_reference":
            result.reference[key[1]] = report
        else:
            result.reports[key] = report
            models[key] = model
    for seed in seeds:
        if base.success_floor is not None:
            result.floors[seed] = base.success_floor
        else:
            ref = result.reference[seed]
            result.floors[seed] = base.floor_ratio * (ref.final_val_accuracy or 0.0)
    if keep_models:
        return result, models
    return result


def write_ablation(result: AblationResult, out_dir, figures: bool = True, models=None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "runs.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arm", "seed", "diverged", "divergence_epoch", "final_val_accuracy", "test_accuracy", "floor", "success"])
        for arm in ARMS:
            for seed in result.seeds:
                r = result.reports[(arm, seed)]
                w.writerow([
                    arm,
                    seed,
                    int(r.diverged),
                    "" if r.divergence_epoch is None else r.divergence_epoch,
                    "" if r.final_val_accuracy is None else repr(r.final_val_accuracy),
                    "" if r.test_accuracy is None else repr(r.test_accuracy),
                    repr(result.floors[seed]),
                    int(result.success(arm, seed)),
                ])
    for (arm, seed), r in result.reports.items():
        run_dir = os.path.join(out_dir, arm, f"seed_{seed}")
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "epochs.csv"), "w") as fh:
            fh.write(r.to_csv())
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(result.summary(), fh, indent=2)
    if figures:
        from .plotting import plot_ablation

        plot_ablation(result, os.path.join(out_dir, "ablation.png"))


def parse_seeds(text: str) -> list:
    """``"0..9"`` (inclusive range) or a comma list ``"0,3,7"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip()]

"""Configuration parsing, experiment registry, and batch-run entry point.

One key=value text file describes one reproducible experiment; the CLI
dispatches it to the measurement modules, writes CSV/JSON artifacts, and
exits 0 exactly when the experiment's own acceptance checks pass (1 when a
check fails or a module faults, 2 for usage errors).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dynamics, harness, operators
from .mollify import (
    EXACT_ANNIHILATION,
    admissible_delta0,
    build_mollifier,
    fit_smoothing_exponents,
    holder_test_field,
)
from .phasevol import verify_sublevel_lemma
from .symbols import MODEL_REGISTRY, make_model

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "EXPERIMENTS",
    "parse_config",
    "emit_config",
    "run",
    "main",
]


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    energy: float
    epsilon: float = 0.1
    delta0: float = 0.41
    r0: float = 0.5
    t0: float = 0.1
    mu: float = 0.8
    c_upper: float = 1.5  # near-critical localization radius multiplier
    c_lower: float = 0.5  # gradient threshold multiplier off the critical set
    h_min: float = 0.025
    h_max: float = 0.1
    h_points: int = 6
    max_grid_points: int = 300
    budget: int = 2**20
    trials: int = 200
    seed: int = 0
    variant: str = "raw"
    out_dir: str = "."

    def h_grid(self):
        return list(np.geomspace(self.h_max, self.h_min, self.h_points))


_REQUIRED = ("model", "energy")
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _validate(cfg: ExperimentConfig, experiment: Optional[str] = None):
    v = []
    if cfg.model not in MODEL_REGISTRY:
        v.append(
            f"unknown model {cfg.model!r}; known: {sorted(MODEL_REGISTRY)}"
        )
    if not admissible_delta0(cfg.delta0, cfg.r0):
        lo = 1.0 / (2.0 + cfg.r0)
        v.append(
            f"delta0 = {cfg.delta0} outside the open interval "
            f"(1/(2+r0), 1/2) = ({lo:.6f}, 0.5)"
        )
    if cfg.c_upper <= 1.0:
        v.append("c_upper must exceed 1")
    if cfg.c_lower <= 0.0:
        v.append("c_lower must be positive")
    if not (0.0 < cfg.epsilon < 1.0):
        v.append("epsilon must lie in (0, 1)")
    if cfg.t0 <= 0.0:
        v.append("t0 must be positive")
    if not (0.0 < cfg.h_min <= cfg.h_max):
        v.append("need 0 < h_min <= h_max")
    if cfg.h_points < 1:
        v.append("h_points must be >= 1")
    if cfg.variant not in ("raw", "plus", "minus"):
        v.append(f"unknown variant {cfg.variant!r}")
    if experiment == "critical_sweep":
        # second-order fibers: the sharp-remainder sweep additionally needs
        # delta0 > (1 - 1/(4 m0 - 1))/2 = 1/3 for m0 = 1
        floor = 0.5 * (1.0 - 1.0 / 3.0)
        if cfg.delta0 <= floor:
            v.append(
                f"delta0 = {cfg.delta0} too small for the sharp-remainder "
                f"sweep: need delta0 > (1 - 1/(4 m0 - 1))/2 = {floor:.6f} "
                "for second-order fibers (m0 = 1)"
            )
    return v


def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """key=value lines ('#' comments, blank lines ignored) -> validated
    config; raises ConfigError listing every violation at once."""
    violations, values = [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"line {lineno}: expected key=value, got {raw!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELDS:
            violations.append(f"line {lineno}: unknown key {key!r}")
            continue
        typ = _FIELDS[key].type
        try:
            if typ == "int":
                values[key] = int(val)
            elif typ == "float":
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError:
            violations.append(f"line {lineno}: cannot parse {key}={val!r}")
    for key in _REQUIRED:
        if key not in values:
            violations.append(f"missing required key {key!r}")
    if violations:
        raise ConfigError(violations)
    cfg = ExperimentConfig(**values)
    violations = _validate(cfg, experiment)
    if violations:
        raise ConfigError(violations)
    return cfg


def emit_config(cfg: ExperimentConfig) -> str:
    """Inverse of parse_config: parse(emit(cfg)) == cfg."""
    lines = [
        f"{f.name} = {getattr(cfg, f.name)}"
        for f in dataclasses.fields(ExperimentConfig)
    ]
    return "\n".join(lines) + "\n"


# -- experiments -----------------------------------------------------------------


def _exp_weyl_sweep(cfg: ExperimentConfig, out):
    model = make_model(cfg.model)
    res = harness.run_h_sweep(
        model,
        cfg.energy,
        cfg.h_grid(),
        delta0=cfg.delta0,
        epsilon=cfg.epsilon,
        variant=cfg.variant,
        kernel=None if cfg.variant == "raw" else build_mollifier(
            model.dimension, 1.0
        ),
        max_grid_points=cfg.max_grid_points,
        volume_budget=cfg.budget,
        seed=cfg.seed,
        out_of_scope_ok=True,  # baseline sweep; d=1 sanity runs allowed
    )
    harness.write_sweep_csv(os.path.join(out, "weyl_sweep.csv"), res)
    fit = harness.fit_exponent(res.records, "remainder")
    target = 1.0 - model.dimension
    status = "pass" if abs(fit.slope - target) <= 0.2 else "fail"
    if not res.complete:
        status = "partial"
    return [
        {
            "name": "weyl_remainder_slope",
            "status": status,
            "slope": fit.slope,
            "target": target,
            "tolerance": 0.2,
            "gaps": list(res.gaps),
            "seed": cfg.seed,
        }
    ]


def _exp_critical_sweep(cfg: ExperimentConfig, out):
    model = make_model(cfg.model)
    res = harness.run_h_sweep(
        model,
        cfg.energy,
        cfg.h_grid(),
        delta0=cfg.delta0,
        epsilon=cfg.epsilon,
        variant=cfg.variant,
        kernel=None if cfg.variant == "raw" else build_mollifier(
            model.dimension, 1.0
        ),
        max_grid_points=cfg.max_grid_points,
        volume_budget=cfg.budget,
        seed=cfg.seed,
    )
    harness.write_sweep_csv(os.path.join(out, "critical_sweep.csv"), res)
    fit = harness.fit_exponent(res.records, "ratio")
    alt = harness.log_corrected_ratio_fit(res.records)
    status = "pass" if abs(fit.slope) <= 0.25 else "fail"
    if not res.complete:
        status = "partial"
    return [
        {
            "name": "bounded_remainder_ratio",
            "status": status,
            "ratio_slope": fit.slope,
            "log_corrected_slope": alt.slope,
            "max_ratio": res.max_ratio,
            "tolerance": 0.25,
            "gaps": list(res.gaps),
            "seed": cfg.seed,
        }
    ]


def _exp_mollifier_rates(cfg: ExperimentConfig, out):
    a = holder_test_field(cfg.r0)
    kernel = build_mollifier(1, 1.0)
    h_grid = np.geomspace(cfg.h_max, cfg.h_min, max(cfg.h_points, 6))
    rows, ok = [], True
    for order in range(4):
        got = fit_smoothing_exponents(
            a, order, h_grid, cfg.delta0, kernel=kernel, r0=cfg.r0
        )
        if got == EXACT_ANNIHILATION:
            rows.append({"order": order, "exact": True})
            continue
        fit, _ = got
        target = (2.0 + cfg.r0 - order) * cfg.delta0
        hit = abs(fit.slope - target) <= 0.2
        ok = ok and hit
        rows.append(
            {"order": order, "slope": fit.slope, "target": target, "ok": hit}
        )
    return [
        {
            "name": "mollifier_rates",
            "status": "pass" if ok else "fail",
            "rows": rows,
            "delta0": cfg.delta0,
            "r0": cfg.r0,
        }
    ]


def _exp_sublevel_lemma(cfg: ExperimentConfig, out):
    rep = verify_sublevel_lemma(
        random_seed=cfg.seed, trials=cfg.trials, delta0=cfg.delta0
    )
    path = os.path.join(out, "sublevel_lemma.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("degree,calibrated_constant\n")
        for deg in sorted(rep.constants):
            fh.write(f"{deg},{rep.constants[deg]!r}\n")
    return [
        {
            "name": "polynomial_sublevel_bound",
            "status": "pass" if rep.ok else "fail",
            "trials": rep.trials,
            "violations": len(rep.violations),
            "max_ratio": rep.max_ratio,
            "constants": list(rep.constants.items()),
            "seed": cfg.seed,
        }
    ]


def _exp_flow_bounds(cfg: ExperimentConfig, out):
    model = make_model(cfg.model)
    h = cfg.h_min
    rep = dynamics.check_displacement_bounds(
        model,
        n_samples=100,
        t_grid=[-cfg.t0, -cfg.t0 / 2, cfg.t0 / 2, cfg.t0],
        cbar=cfg.c_lower,
        delta0=cfg.delta0,
        h=h,
        seed=cfg.seed,
    )
    return [
        {
            "name": "flow_displacement_bounds",
            "status": "pass" if rep.ok else "fail",
            "violations": len(rep.violations),
            "c1": rep.c1,
            "c2": rep.c2,
            "t0": rep.t0,
            "empirical_t0": rep.empirical_t0,
            "seed": cfg.seed,
        }
    ]


def _exp_oscillatory_decay(cfg: ExperimentConfig, out):
    model = make_model("harmonic")
    hs = np.geomspace(1e-2, 1e-3, 6)
    box = [(-1.6, 1.6), (-1.6, 1.6)]
    decay = dynamics.nonstationary_decay_check(
        model,
        lambda h: dynamics.ring_amplitude([0.0, 0.0], 0.5, 1.5),
        mu=cfg.mu,
        n_max=3,
        h_grid=hs,
        delta0=0.25,
        support_box=box,
    )
    control = dynamics.nonstationary_decay_check(
        model,
        lambda h: dynamics.bump_amplitude([0.0, 0.0], 0.8),
        mu=cfg.mu,
        n_max=3,
        h_grid=hs,
        delta0=0.25,
        support_box=[(-0.9, 0.9), (-0.9, 0.9)],
    )
    ok = decay.all_orders_ok and not control.satisfied[1]
    return [
        {
            "name": "nonstationary_phase_decay",
            "status": "pass" if ok else "fail",
            "decay_slope": decay.fit.slope,
            "control_slope": control.fit.slope,
            "kappa": decay.kappa,
            "required": {str(k): v for k, v in decay.required.items()},
        }
    ]


def _exp_smoothed_counting(cfg: ExperimentConfig, out):
    model = make_model("harmonic")
    window = (0.2, 0.8)
    rows, ok = [], True
    for h in (0.05, 0.035, 0.025):
        counter = operators.build_mollified_counter(1.0, h, window)
        grid = operators.GridSpec(model.box_x, 1200)
        op = operators.assemble(
            model, None, h, cfg.delta0, grid, strict_resolution=False
        )
        level = counter.coverage_level()
        slc = operators.eigenvalues_below(op, level, 0.0)
        lam = slc.eigenvalues
        sharp = int(np.sum((lam >= window[0]) & (lam <= window[1])))
        smoothed = operators.smoothed_count(slc, counter)
        zone = _edge_zone_halfwidth(counter)
        in_zone = int(
            np.sum(
                (np.abs(lam - window[0]) <= zone)
                | (np.abs(lam - window[1]) <= zone)
            )
        )
        hit = abs(smoothed - sharp) <= in_zone
        ok = ok and hit
        rows.append(
            {
                "h": h,
                "sharp": sharp,
                "smoothed": smoothed,
                "edge_zone_eigs": in_zone,
                "ok": hit,
            }
        )
    return [
        {
            "name": "smoothed_vs_sharp_count",
            "status": "pass" if ok else "fail",
            "rows": rows,
            "t0": 1.0,
        }
    ]


def _edge_zone_halfwidth(counter, deviation: float = 0.01) -> float:
    """Calibrated O(h) halfwidth: outside it the smoothed window function is
    within `deviation` of the sharp indicator."""
    e1, e2 = counter.window
    lam = np.linspace(e1 - 40 * counter.h, e2 + 40 * counter.h, 40001)
    ind = ((lam >= e1) & (lam <= e2)).astype(float)
    dev = np.abs(counter.f_tilde(lam) - ind)
    bad = lam[dev > deviation]
    if len(bad) == 0:
        return counter.h
    return float(np.max(np.minimum(np.abs(bad - e1), np.abs(bad - e2))))


EXPERIMENTS = {
    "weyl_sweep": _exp_weyl_sweep,
    "critical_sweep": _exp_critical_sweep,
    "mollifier_rates": _exp_mollifier_rates,
    "sublevel_lemma": _exp_sublevel_lemma,
    "flow_bounds": _exp_flow_bounds,
    "oscillatory_decay": _exp_oscillatory_decay,
    "smoothed_counting": _exp_smoothed_counting,
}


def run(cfg: ExperimentConfig, experiment: str) -> int:
    """Execute one experiment; write artifacts; return the exit status."""
    if experiment not in EXPERIMENTS:
        sys.stderr.write(
            f"unknown experiment {experiment!r}; "
            f"registry: {sorted(EXPERIMENTS)}\n"
        )
        return 2
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    try:
        criteria = EXPERIMENTS[experiment](cfg, out)
    except Exception as exc:
        report = harness.acceptance_report(
            [{"name": experiment, "status": "fail",
              "error": f"{type(exc).__name__}: {exc}"}]
        )
        harness.write_verdict_json(os.path.join(out, "verdict.json"), report)
        return 1
    report = harness.acceptance_report(criteria)
    harness.write_verdict_json(os.path.join(out, "verdict.json"), report)
    return 0 if report["verdict"] == "PASS" else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weyllab",
        description="eigenvalue-counting experiments against phase-space "
        "volume asymptotics",
    )
    parser.add_argument("--config", help="key=value experiment file")
    parser.add_argument(
        "--experiment", required=True, help=f"one of {sorted(EXPERIMENTS)}"
    )
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--h-min", type=float, default=None)
    parser.add_argument("--h-max", type=float, default=None)
    parser.add_argument("--h-points", type=int, default=None)
    args = parser.parse_args(argv)

    if args.experiment not in EXPERIMENTS:
        sys.stderr.write(
            f"unknown experiment {args.experiment!r}; "
            f"registry: {sorted(EXPERIMENTS)}\n"
        )
        return 2
    text = ""
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            sys.stderr.write(f"cannot read config: {exc}\n")
            return 2
    try:
        cfg = parse_config(text, experiment=args.experiment)
    except ConfigError as exc:
        for item in exc.violations:
            sys.stderr.write(f"config error: {item}\n")
        return 2
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.h_min is not None:
        overrides["h_min"] = args.h_min
    if args.h_max is not None:
        overrides["h_max"] = args.h_max
    if args.h_points is not None:
        overrides["h_points"] = args.h_points
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        bad = _validate(cfg, args.experiment)
        if bad:
            for item in bad:
                sys.stderr.write(f"config error: {item}\n")
            return 2
    return run(cfg, args.experiment)


if __name__ == "__main__":
    sys.exit(main())

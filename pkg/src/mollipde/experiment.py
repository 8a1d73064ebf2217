"""Config-driven experiments: generate data, train, recover, score, report.

Configs are flat key-value INI files with one section per concern (problem,
kernel, network, optimizer, training, metrics); every field has a default so
a config may override only what it needs, and shipped presets cover the
benchmark problems at desk scale (CI-friendly) and benchmark scale.  Every
run is deterministic given its seeds; the report echoes the fully resolved
config so rerunning the echo reproduces all correlation metrics bit for bit
(wall-clock counters excluded, and assuming the same numeric backend).
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import accounting, backend, calculus, metrics
from .errors import ConfigurationError, MollipdeError, TrainingDivergedError
from .grids import GridField, edge_pad, halo_flat_indices, write_binary, write_csv
from .kernels import (
    SIZE7_SUPPORT_RADII,
    KernelFamily,
    MollifierKernel,
    discretize,
    laplacian_stencil,
)
from .calculus import mollify
from .network import build_network, save_checkpoint
from .optim import CosineSchedule
from .residuals import (
    SampleMask,
    heat_problem,
    langevin_problem,
    reaction_diffusion_problem,
    separable_lambda,
    total_loss,
)
from .synth import (
    HeatSpec,
    LangevinSpec,
    RdSpec,
    simulate_heat,
    simulate_langevin,
    simulate_reaction_diffusion,
    sparse_sample,
)
from .training import forward_toy_solve, train

FORMAT_VERSION = 1
OUT_ROOT_ENV = "MOLLIPDE_OUT_ROOT"


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = ""
    problem: str = "langevin"
    estimator: str = "separable"
    # langevin
    forcing_profile: str = "constant"
    mean_level: float = -1.0
    sigma: float = 0.0
    n_points: int = 101
    u0: float = 2.0
    # heat
    diffusivity: str = "sine_x"
    solution: str = "sinsin"
    level: float = 1.0
    grid_n: int = 64
    # reaction-diffusion
    reaction: str = "two_level"
    rd_level: float = 1.2
    phi_max: float = 0.8
    interface_width: float = 0.12
    nucleoplasm: float = 0.2
    rd_spacing: float = 0.05
    steady_tol: float = 1e-3
    single_fourth_order: bool = False
    # forward toy
    toy_lam: float = 1.0
    # kernel
    kernel_family: str = "exp_bump"
    support_radius: float = 0.05
    # network
    arch_preset: str = "desk"
    width: int = 0
    depth: int = 0
    activation: str = ""
    fourier_count: int = 0
    layernorm: bool = True
    # optimizer
    base_rate: float = 1e-3
    floor_rate: float = 1e-6
    decay_fraction: float = 0.1
    # training
    epochs: int = 1000
    batch_size: int = 0
    sampling_fraction: float = 1.0
    seeds: tuple = (0,)
    data_only: bool = False
    head_solve: bool = False
    # recovery and metrics
    tau_factor: float = 1e-3
    noise_window: float = 0.12
    # convergence harness
    sweep_h: tuple = (1 / 64, 1 / 128, 1 / 256, 1 / 512)
    sweep_noise: tuple = (0.0, 1e-3, 1e-2)

    def validate(self) -> "ExperimentConfig":
        if self.problem not in ("langevin", "heat", "reaction_diffusion", "forward_ode",
                                "convergence"):
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        KernelFamily.parse(self.kernel_family)
        if self.support_radius <= 0:
            raise ConfigurationError("support_radius must be positive")
        if not self.seeds:
            raise ConfigurationError("at least one seed required")
        if not (0 < self.sampling_fraction <= 1):
            raise ConfigurationError("sampling_fraction must be in (0, 1]")
        from .network import ARCHITECTURE_PRESETS

        if self.arch_preset not in ARCHITECTURE_PRESETS:
            raise ConfigurationError(f"unknown architecture preset {self.arch_preset!r}")
        return self

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["sweep_h"] = list(self.sweep_h)
        d["sweep_noise"] = list(self.sweep_noise)
        return d


_SECTIONS = {
    "experiment": ("preset", "problem", "estimator"),
    "problem": ("forcing_profile", "mean_level", "sigma", "n_points", "u0",
                "diffusivity", "solution", "level", "grid_n", "reaction",
                "rd_level", "phi_max", "interface_width", "nucleoplasm",
                "rd_spacing", "steady_tol", "single_fourth_order", "toy_lam"),
    "kernel": ("kernel_family", "support_radius"),
    "network": ("arch_preset", "width", "depth", "activation", "fourier_count",
                "layernorm"),
    "optimizer": ("base_rate", "floor_rate", "decay_fraction"),
    "training": ("epochs", "batch_size", "sampling_fraction", "seeds",
                 "data_only", "head_solve"),
    "metrics": ("tau_factor", "noise_window"),
    "convergence": ("sweep_h", "sweep_noise"),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if name in ("seeds", "sweep_h", "sweep_noise"):
        parts = [p for p in raw.replace(",", " ").split() if p]
        caster = int if name == "seeds" else float
        return tuple(caster(p) for p in parts)
    if kind == "bool":
        return raw.lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def config_from_file(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    overrides = {}
    for section, names in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in names:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            overrides[key] = _parse_value(key, raw)
    preset = overrides.pop("preset", "")
    base = preset_config(preset) if preset else ExperimentConfig()
    cfg = dataclasses.replace(base, preset=preset, **overrides)
    return cfg.validate()


def config_to_file(config: ExperimentConfig, path) -> None:
    parser = configparser.ConfigParser()
    d = config.as_dict()
    for section, names in _SECTIONS.items():
        parser.add_section(section)
        for name in names:
            value = d[name]
            if isinstance(value, (list, tuple)):
                value = " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            parser.set(section, name, str(value))
    with open(path, "w", encoding="ascii") as fh:
        parser.write(fh)


PRESETS = {
    # desk scale (acceptance-sized)
    "langevin-constant": dict(problem="langevin", sigma=0.0, epochs=1000,
                              kernel_family="exp_bump", support_radius=0.05,
                              fourier_count=64, base_rate=3e-3,
                              decay_fraction=0.3, seeds=(0,)),
    "langevin-noise": dict(problem="langevin", sigma=1.0, epochs=0,
                           kernel_family="exp_bump", support_radius=0.015,
                           width=384, depth=1, activation="relu",
                           layernorm=False, fourier_count=64,
                           data_only=True, head_solve=True,
                           noise_window=0.08, seeds=(0, 1, 2, 3, 4)),
    "heat-constant": dict(problem="heat", diffusivity="constant", grid_n=64,
                          width=1024, depth=1, activation="tanh",
                          layernorm=False, data_only=True, head_solve=True,
                          epochs=0, kernel_family="exp_bump",
                          support_radius=3.2 / 63, seeds=(0,)),
    "heat-varying": dict(problem="heat", diffusivity="sine_x", grid_n=64,
                         width=1024, depth=1, activation="tanh",
                         layernorm=False, data_only=True, head_solve=True,
                         epochs=0, kernel_family="exp_bump",
                         support_radius=3.2 / 63, seeds=(0,)),
    "rd-twolevel": dict(problem="reaction_diffusion", reaction="two_level",
                        grid_n=64, width=1024, depth=1, activation="tanh",
                        layernorm=False, data_only=True, head_solve=True,
                        epochs=0, kernel_family="exp_bump",
                        support_radius=0.15, seeds=(0, 1)),
    "forward-toy": dict(problem="forward_ode", epochs=5000,
                        kernel_family="exp_bump", support_radius=0.25, seeds=(0,)),
    "convergence": dict(problem="convergence"),
    # benchmark scale (support radii are the shipped size-7 pairs)
    "langevin-bench": dict(problem="langevin", sigma=1.0, epochs=1000,
                           arch_preset="langevin-bench", batch_size=200,
                           kernel_family="exp_bump",
                           support_radius=SIZE7_SUPPORT_RADII["langevin"],
                           seeds=(0, 1, 2, 3, 4)),
    "heat-bench": dict(problem="heat", diffusivity="sine_x", grid_n=201,
                       arch_preset="field-bench", epochs=1000, batch_size=2500,
                       kernel_family="exp_bump",
                       support_radius=SIZE7_SUPPORT_RADII["heat"], seeds=(0,)),
    "rd-bench": dict(problem="reaction_diffusion", reaction="two_level",
                     grid_n=64, arch_preset="field-bench", epochs=500,
                     batch_size=2500, kernel_family="exp_bump",
                     support_radius=SIZE7_SUPPORT_RADII["reaction_diffusion"],
                     seeds=(0, 1, 2, 3, 4)),
}


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; options: {sorted(PRESETS)}")
    return ExperimentConfig(preset=name, **PRESETS[name]).validate()


def resolve_out_dir(out_dir) -> Path:
    out = Path(out_dir)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


# ---------------------------------------------------------------------------
# Data generation and evaluation per problem
# ---------------------------------------------------------------------------

def _make_kernel(config: ExperimentConfig, dimension: int) -> MollifierKernel:
    return MollifierKernel(KernelFamily.parse(config.kernel_family),
                           support_radius=config.support_radius,
                           dimension=dimension)


def generate_bundle(config: ExperimentConfig, seed: int) -> dict:
    """Simulate one dataset for the configured problem."""
    if config.problem == "langevin":
        spec = LangevinSpec(profile=config.forcing_profile,
                            mean_level=config.mean_level, sigma=config.sigma,
                            n_points=config.n_points, u0=config.u0, seed=seed)
        u, lam = simulate_langevin(spec)
        return {"data": u, "lam_true": lam, "u_true": u,
                "problem": langevin_problem(config.estimator),
                "manifest": {"spec": dataclasses.asdict(spec)}}
    if config.problem == "heat":
        spec = HeatSpec(diffusivity=config.diffusivity, level=config.level,
                        solution=config.solution,
                        shape=(config.grid_n, config.grid_n), seed=seed)
        u, lam, m = simulate_heat(spec)
        return {"data": u, "lam_true": lam, "u_true": u, "source": m,
                "problem": heat_problem(m, config.estimator),
                "manifest": {"spec": dataclasses.asdict(spec)}}
    if config.problem == "reaction_diffusion":
        spec = RdSpec(reaction=config.reaction, level=config.rd_level,
                      phi_max=config.phi_max,
                      interface_width=config.interface_width,
                      nucleoplasm=config.nucleoplasm,
                      shape=(config.grid_n, config.grid_n),
                      spacing=config.rd_spacing, steady_tol=config.steady_tol,
                      seed=seed)
        phi_d, phi_n, lam, diagnostics = simulate_reaction_diffusion(spec)
        problem = reaction_diffusion_problem(
            phi_n, config.phi_max, config.interface_width,
            estimator=config.estimator,
            single_fourth_order=config.single_fourth_order)
        return {"data": phi_d, "lam_true": lam, "u_true": phi_d, "phi_n": phi_n,
                "problem": problem, "manifest": {"spec": dataclasses.asdict(spec),
                                                 "diagnostics": diagnostics}}
    raise ConfigurationError(f"no generator for problem {config.problem!r}")


def extend_bundle(config: ExperimentConfig, bundle: dict) -> dict:
    """Wrap the dataset in a collocation halo one stencil margin wide.

    The network is evaluated on the extended grid so the smoothed field (and
    hence the data loss) covers every original-domain node; the halo cells
    themselves are marked invalid and are never read by any loss.
    """
    data = bundle["data"]
    kernel = _make_kernel(config, data.dimension)
    zeroth = discretize(kernel, data.spacing, (0,) * data.dimension)
    halo = zeroth.radius
    extended = dict(bundle)
    for key in ("data", "lam_true", "u_true", "source", "phi_n"):
        if key in bundle:
            extended[key] = edge_pad(bundle[key], halo)
    problem = bundle["problem"]
    if problem.kind.value == "heat":
        extended["problem"] = heat_problem(extended["source"], problem.estimator)
    elif problem.kind.value == "reaction_diffusion":
        extended["problem"] = reaction_diffusion_problem(
            extended["phi_n"], problem.constants["phi_max"],
            problem.constants["interface_width"], problem.estimator,
            problem.single_fourth_order)
    extended["halo"] = halo
    extended["index_map"] = halo_flat_indices(data.shape, halo)
    extended["original_data"] = data
    return extended


def crop_halo(field: GridField, halo: int) -> GridField:
    """Restrict an extended-frame field back to the original domain."""
    if halo == 0:
        return field
    sl = tuple(slice(halo, n - halo) for n in field.shape)
    return GridField(field.values[sl], spacing=field.spacing,
                     origin=tuple(o + halo * s for o, s in zip(field.origin, field.spacing)),
                     margin=tuple(max(m - halo, 0) for m in field.margin))


def _laplacian_correlation(g_field: GridField, u_true: GridField,
                           kernel: MollifierKernel, halo: int = 0) -> float:
    # compare strictly inside the original domain: the padded halo has no
    # meaningful curvature for either the recovery or the oracle
    recovered = mollify(g_field, laplacian_stencil(kernel, g_field.spacing))
    oracle = metrics.central_difference_laplacian(u_true.values, u_true.spacing)
    margin = tuple(max(m, halo + 1) for m in recovered.margin)
    sl = tuple(slice(m, n - m) for m, n in zip(margin, recovered.shape))
    return metrics.pearson(recovered.values[sl], oracle[sl])


def evaluate_run(config: ExperimentConfig, bundle: dict, net,
                 mask: SampleMask | None = None) -> dict:
    """Recover the parameter field and score it against the truth."""
    kernel = _make_kernel(config, bundle["data"].dimension)
    problem = bundle["problem"]
    g_field, lam_raw, _ = net.forward_on_grid(bundle["data"])
    residual = None
    if mask is not None:
        breakdown, _, _ = total_loss(problem, g_field, lam_raw, bundle["data"],
                                     mask, kernel)
        residual = breakdown.residual
    if config.estimator == "separable":
        lam_hat, valid = separable_lambda(problem, g_field, kernel,
                                          tau_factor=config.tau_factor)
    else:
        lam_hat = lam_raw
        zeroth = discretize(kernel, bundle["data"].spacing,
                            (0,) * bundle["data"].dimension)
        lam_hat = lam_hat.with_values(lam_hat.values,
                                      margin=(zeroth.radius,) * lam_hat.dimension)
        valid = lam_hat.interior_mask().boolean
    truth = bundle["lam_true"]
    pred = lam_hat.values[valid]
    true = truth.values[valid]
    out = {
        "recovered_mean": float(pred.mean()),
        "true_mean": float(true.mean()),
        "masked_fraction": float(1.0 - valid.sum() / lam_hat.interior_mask().count),
        "lam_hat": lam_hat,
        "valid": valid,
        "residual_field": residual,
    }
    out["mean_rel_error"] = abs(out["recovered_mean"] - out["true_mean"]) / max(
        abs(out["true_mean"]), 1e-300)
    if float(np.ptp(true)) > 0:
        out["trend_corr"] = metrics.pearson(pred, true)
    if config.sigma > 0 and config.problem == "langevin":
        out["noise_corr"] = metrics.noise_trend_correlation(
            lam_hat, truth.with_values(truth.values, margin=lam_hat.margin),
            window_radius=config.noise_window)
    if bundle["data"].dimension == 2:
        out["laplacian_corr"] = _laplacian_correlation(
            g_field, bundle["u_true"], kernel, halo=bundle.get("halo", 0))
    return out


# ---------------------------------------------------------------------------
# Run / sweep / converge
# ---------------------------------------------------------------------------

def run(config: ExperimentConfig, out_dir) -> dict:
    """Execute one experiment; returns the report dict (also written to disk)."""
    config.validate()
    out = resolve_out_dir(out_dir)
    if config.problem == "convergence":
        return run_convergence(config, out)
    if config.problem == "forward_ode":
        return run_forward_toy(config, out)

    out.mkdir(parents=True, exist_ok=True)
    counters = accounting.ResourceCounters()
    seed_reports = []
    lam_fields = []
    truths = []
    with accounting.track(counters):
        for seed in config.seeds:
            bundle = extend_bundle(config, generate_bundle(config, seed))
            data = bundle["data"]
            base_mask = sparse_sample(bundle["original_data"],
                                      config.sampling_fraction, seed)
            mask = SampleMask(indices=bundle["index_map"][base_mask.indices],
                              seed=seed, fraction=config.sampling_fraction)
            kernel = _make_kernel(config, data.dimension)
            overrides = {"use_layernorm": config.layernorm}
            if config.width:
                overrides["width"] = config.width
            if config.depth:
                overrides["depth"] = config.depth
            if config.activation:
                overrides["activation"] = config.activation
            if config.fourier_count:
                overrides["fourier_count"] = config.fourier_count
            net = build_network(config.arch_preset, input_dim=data.dimension,
                                seed=seed, **overrides)
            schedule = CosineSchedule(
                base_rate=config.base_rate, floor_rate=config.floor_rate,
                total_steps=config.epochs,
                decay_start=int(config.decay_fraction * config.epochs))
            try:
                result = train(bundle["problem"], data, mask, kernel, net,
                               schedule=schedule, epochs=config.epochs,
                               batch_size=config.batch_size, seed=seed,
                               include_residual=not config.data_only,
                               head_solve=config.head_solve)
            except TrainingDivergedError as exc:
                ckpt = out / f"last_good_seed{seed}.ckpt"
                save_checkpoint(net, ckpt)
                raise TrainingDivergedError(str(exc), checkpoint_path=str(ckpt))

            scores = evaluate_run(config, bundle, net, mask=mask)
            lam_hat = scores.pop("lam_hat")
            valid = scores.pop("valid")
            residual = scores.pop("residual_field")
            _write_seed_outputs(out, seed, result, lam_hat, valid, residual,
                                bundle, net)
            seed_reports.append({"seed": seed, "final_losses": {
                "mse_u": result.final.mse_u, "mse_f": result.final.mse_f,
                "mse_total": result.final.mse_total}, **scores})
            sl = lam_hat.interior_mask().slices
            lam_fields.append(np.where(valid, lam_hat.values, np.nan)[sl])
            truths.append(bundle["lam_true"].values[sl])

    aggregate = _aggregate(seed_reports, lam_fields, truths)
    report = {
        "format_version": FORMAT_VERSION,
        "backend": backend.BACKEND,
        "preset": config.preset,
        "config": config.as_dict(),
        "seeds": seed_reports,
        "aggregate": aggregate,
        "resources": counters.as_dict(),
    }
    with open(out / "report.json", "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    config_to_file(config, out / "config.ini")
    return report


def _write_seed_outputs(out: Path, seed: int, result, lam_hat, valid, residual,
                        bundle, net):
    with open(out / f"losses_seed{seed}.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse_u", "mse_f", "mse_total", "rate"])
        for rec in result.history:
            writer.writerow(rec.as_row())
    halo = bundle.get("halo", 0)
    lam_out = crop_halo(lam_hat, halo)
    valid_out = crop_halo(lam_hat.with_values(valid.astype(float),
                                              margin=(0,) * lam_hat.dimension), halo)
    write_csv(lam_out, out / f"lambda_hat_seed{seed}.csv")
    write_binary(lam_out, out / f"lambda_hat_seed{seed}.bin")
    write_binary(crop_halo(bundle["lam_true"], halo), out / f"lambda_true_seed{seed}.bin")
    write_binary(valid_out, out / f"lambda_valid_seed{seed}.bin")
    if residual is not None:
        write_binary(crop_halo(residual, halo), out / f"residual_seed{seed}.bin")
    save_checkpoint(net, out / f"network_seed{seed}.ckpt")


def evaluate(out_dir) -> dict:
    """Recompute correlation metrics from the field files of a finished run."""
    from .grids import read_binary

    out = resolve_out_dir(out_dir)
    report_path = out / "report.json"
    if not report_path.exists():
        raise ConfigurationError(f"no report.json under {out}; run the experiment first")
    with open(report_path, encoding="ascii") as fh:
        report = json.load(fh)
    seeds = [entry["seed"] for entry in report.get("seeds", [])]
    results = []
    for seed in seeds:
        lam_hat = read_binary(out / f"lambda_hat_seed{seed}.bin")
        lam_true = read_binary(out / f"lambda_true_seed{seed}.bin")
        valid = read_binary(out / f"lambda_valid_seed{seed}.bin").values > 0.5
        entry = {"seed": seed,
                 "recovered_mean": float(lam_hat.values[valid].mean()),
                 "true_mean": float(lam_true.values[valid].mean())}
        if float(np.ptp(lam_true.values[valid])) > 0:
            entry["trend_corr"] = metrics.pearson(lam_hat.values[valid],
                                                  lam_true.values[valid])
        results.append(entry)
    summary = {"format_version": FORMAT_VERSION, "seeds": results}
    with open(out / "metrics.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _aggregate(seed_reports, lam_fields, truths) -> dict:
    agg = {}
    for key in ("trend_corr", "noise_corr", "laplacian_corr", "mean_rel_error"):
        values = [r[key] for r in seed_reports if key in r]
        if values:
            agg[f"mean_{key}"] = float(np.mean(values))
    if len(lam_fields) >= 2 and all(np.array_equal(truths[0], t) for t in truths[1:]):
        finite = np.all([np.isfinite(f) for f in lam_fields], axis=0)
        if finite.any():
            fields = [np.where(np.isfinite(f), f, 0.0)[finite] for f in lam_fields]
            truth = truths[0][finite]
            try:
                stats = metrics.aggregate_runs(fields, truth)
                agg["mean_corr"] = stats.mean_corr
                agg["cross_run_trend_corr"] = stats.trend_corr
            except MollipdeError:
                pass
    return agg


def run_forward_toy(config: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    counters = accounting.ResourceCounters()
    with accounting.track(counters):
        kernel = MollifierKernel(KernelFamily.parse(config.kernel_family),
                                 support_radius=config.support_radius, dimension=1)
        u_hat, result = forward_toy_solve(kernel=kernel, epochs=config.epochs,
                                          lam=config.toy_lam,
                                          seed=config.seeds[0])
    sl = u_hat.interior_mask().slices
    xs = u_hat.axis_coordinates(0)[sl[0]]
    exact = np.exp(-config.toy_lam * xs)
    rel_err = float(np.max(np.abs(u_hat.values[sl] - exact) / np.abs(exact)))
    report = {
        "format_version": FORMAT_VERSION,
        "backend": backend.BACKEND,
        "preset": config.preset,
        "config": config.as_dict(),
        "max_relative_interior_error": rel_err,
        "final_losses": {"mse_u": result.final.mse_u, "mse_f": result.final.mse_f,
                         "mse_total": result.final.mse_total},
        "resources": counters.as_dict(),
    }
    write_csv(u_hat, out / "u_hat.csv")
    with open(out / "report.json", "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    config_to_file(config, out / "config.ini")
    return report


def run_convergence(config: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    rows_all = []
    for eps in config.sweep_noise:
        pairs = [(h, math.sqrt(h)) for h in config.sweep_h]
        rows = calculus.convergence_sweep("sin2pi", config.kernel_family, pairs,
                                          noise_amplitude=eps, seed=config.seeds[0])
        rows_all.extend(rows)
    slope = calculus.loglog_slope(
        [r for r in rows_all if r.noise == 0.0])
    c1, c2 = calculus.fit_error_envelope(rows_all)
    with open(out / "convergence.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "delta", "noise", "uniform_error", "central_diff_error"])
        for r in rows_all:
            writer.writerow([r.h, r.delta, r.noise, r.uniform_error,
                             r.central_diff_error])
    report = {
        "format_version": FORMAT_VERSION,
        "backend": backend.BACKEND,
        "preset": config.preset,
        "config": config.as_dict(),
        "loglog_slope": slope,
        "envelope": {"c1": c1, "c2": c2},
        "rows": len(rows_all),
    }
    with open(out / "report.json", "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


SWEEP_COLUMNS = ["name", "status", "problem", "kernel_family", "support_radius",
                 "n_seeds", "mean_corr", "trend_corr", "noise_corr",
                 "laplacian_corr", "mean_rel_error", "wall_time_s", "error"]


def sweep(named_configs, out_dir) -> list:
    """Run several configs; one summary row per config, failures included."""
    named_configs = list(named_configs)
    if not named_configs:
        raise ConfigurationError("sweep needs at least one config")
    out = resolve_out_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, config in named_configs:
        row = {c: "" for c in SWEEP_COLUMNS}
        row.update(name=name, problem=config.problem,
                   kernel_family=config.kernel_family,
                   support_radius=config.support_radius,
                   n_seeds=len(config.seeds))
        try:
            report = run(config, out / name)
            agg = report.get("aggregate", {})
            row.update(status="ok",
                       mean_corr=agg.get("mean_corr", ""),
                       trend_corr=agg.get("mean_trend_corr", ""),
                       noise_corr=agg.get("mean_noise_corr", ""),
                       laplacian_corr=agg.get("mean_laplacian_corr", ""),
                       mean_rel_error=agg.get("mean_mean_rel_error", ""),
                       wall_time_s=report.get("resources", {}).get("wall_time_s", ""))
        except MollipdeError as exc:
            row.update(status="failed", error=str(exc))
        rows.append(row)
    with open(out / "summary.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows

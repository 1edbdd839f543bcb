"""Command-line interface: prepare, train, attack, certify and analyse."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from . import data as data_mod
from .attack import AttackConfig, PerturbationBudget, parse_norm_order
from .cert_lp import certify_batch, certify_grid_batch, summarize_certification
from .config import apply_config_defaults, get_config_path, get_workers, load_config
from .consistency import GaussianModel, md_square_stats
from .data import Dataset
from .errors import DataError, RobustnessError, SchemaError, UsageError
from .manifest import RunManifest, atomic_write, sha256_file
from .model_io import ModelBundle, load_model, save_model
from .net import MlpModel, TrainConfig, init_model, predict, train_clean
from .numerics import default_ridge
from .omega import OmegaTransform, build_omega, identity_omega, inscribed_epsilon
from .smoothing import (
    ABSTAIN,
    SmoothingConfig,
    certify_smoothed_batch,
    noise_covariance_from_omega,
    noise_covariance_isotropic,
)
from .synthetic import make_correlated_blobs, make_toy
from .training import (
    AdvTrainConfig,
    adversarial_train,
    evaluate_defense,
    evaluate_defense_grid,
    match_budgets,
    summarize_runs,
)

logger = logging.getLogger(__name__)

DEFAULT_PERMUTATIONS = 100


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports bad usage as an exception instead of exiting with 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}", suggestion=f"Run '{self.prog} --help' for usage.")


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


# ── Shared helpers ───────────────────────────────────────────────────────


def _load_dataset(args: argparse.Namespace, path: Optional[str] = None) -> Dataset:
    path = path or args.data
    drop = [c for c in (args.drop or "").split(",") if c]
    d = data_mod.load_csv(path, args.label, drop)
    print(f"  → {path}: {d.n} samples, {d.d} features")
    return d


def _save_frame(frame: pd.DataFrame, path: str, manifest: Optional[RunManifest]) -> None:
    with atomic_write(path) as f:
        frame.to_csv(f, index=False, float_format="%.17g")
    if manifest is not None:
        manifest.record_output(path)
    print(f"  → wrote {path}")


def _non_negative_float(value: str) -> float:
    try:
        number = float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a number, got '{value}'") from e
    if not np.isfinite(number) or number < 0:
        raise argparse.ArgumentTypeError(f"must be finite and non-negative, got {value}")
    return number


def _parse_hidden(value: str) -> tuple[int, ...]:
    try:
        hidden = tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise UsageError(f"Hidden layer sizes must be comma-separated integers, got '{value}'") from e
    if not hidden or min(hidden) < 1:
        raise UsageError("At least one hidden layer of positive width is required")
    return hidden


def _shapley_permutations(spec: str) -> int:
    _, _, arg = spec.partition(":")
    if not arg:
        return DEFAULT_PERMUTATIONS
    try:
        return int(arg)
    except ValueError as e:
        raise UsageError(f"Bad permutation count in '{spec}'") from e


def build_omega_from_spec(
    spec: str,
    reference: Dataset,
    model: Optional[MlpModel] = None,
    seed: int = 0,
    ridge: Optional[float] = None,
) -> OmegaTransform:
    """
    Parse ``identity | pearson | shapley[:n] | md | md-target | mask:a,b | import:file``.

    Statistics come from ``reference``; ``shapley`` explains ``model``.
    """
    name, _, arg = spec.partition(":")
    if name == "identity":
        return identity_omega(reference.d)
    if name == "pearson":
        return build_omega("pearson", importance=data_mod.pearson_importance(reference))
    if name == "shapley":
        if model is None:
            raise UsageError("shapley omega needs a model to explain")
        importance = data_mod.shapley_importance(model, reference, _shapley_permutations(spec), seed)
        return build_omega("shapley", importance=importance)
    if name == "md":
        return build_omega("md", covariance=data_mod.covariance(reference, "all"), ridge=ridge)
    if name == "md-target":
        return build_omega("md-target", covariance=data_mod.covariance(reference, "negative_only"), ridge=ridge)
    if name == "mask":
        names = [n for n in arg.split(",") if n]
        unknown = [n for n in names if n not in reference.feature_names]
        if unknown:
            raise SchemaError(f"Unknown mutable features: {', '.join(unknown)}")
        return build_omega("mask", mutable=[f in names for f in reference.feature_names])
    if name == "import":
        if not arg:
            raise UsageError("import omega needs a file: import:<path>")
        importance = data_mod.load_importance(arg, reference.feature_names)
        return build_omega("import", importance=importance)
    raise UsageError(
        f"Unknown omega spec '{spec}'",
        suggestion="Use identity, pearson, shapley[:n], md, md-target, mask:<names> or import:<file>.",
    )


def _resolve_omega(args: argparse.Namespace, bundle: ModelBundle, reference: Dataset) -> OmegaTransform:
    if args.omega == "model":
        if bundle.omega is not None:
            return bundle.omega
        return identity_omega(reference.d)
    return build_omega_from_spec(args.omega, reference, bundle.model, args.seed, args.ridge)


def _resolve_epsilon(args: argparse.Namespace, bundle: ModelBundle) -> float:
    if args.epsilon is not None:
        return args.epsilon
    if bundle.train_epsilon is not None:
        return bundle.train_epsilon
    raise UsageError("No --epsilon given and the model file records no training epsilon")


def _attack_config(args: argparse.Namespace, omega: Optional[OmegaTransform]) -> AttackConfig:
    mode = args.mode
    if mode is None:
        mode = "uniform" if omega is None or omega.kind == "identity" else "nonuniform"
    return AttackConfig(
        steps=args.steps,
        step_size=args.step_size,
        init=args.init,
        seed=args.seed,
        mode=mode,
        omega=omega if mode != "uniform" else None,
        epsilon_uniform=args.epsilon_uniform,
    )


# ── Subcommands ──────────────────────────────────────────────────────────


def cmd_prepare(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("📦 Prepare dataset")
    if args.synthetic == "toy":
        d = make_toy(args.samples, args.seed)
    elif args.synthetic == "blobs":
        d = make_correlated_blobs(args.samples, args.dim, args.seed)
    elif args.input:
        d = _load_dataset(args, args.input)
        manifest.dataset_sha256 = sha256_file(args.input)
    else:
        raise UsageError("prepare needs --input or --synthetic")

    # splits stay in raw units; the model file carries the standardization
    train, test = data_mod.split_dataset(d, args.test_fraction, args.seed)
    stats = data_mod.fit_standardization(train)
    print(f"  → split {train.n} train / {test.n} test (seed {args.seed})")

    out = Path(args.out)
    for name, part in (("train.csv", train), ("test.csv", test)):
        frame = pd.DataFrame(part.features, columns=list(part.feature_names))
        frame[args.label] = part.labels
        _save_frame(frame, str(out / name), manifest)
    stats_path = out / "standardization.json"
    with atomic_write(stats_path) as f:
        json.dump(stats.to_dict(), f, indent=2)
    manifest.record_output(stats_path)
    print(f"✅ Prepared data in {out}")
    return 0


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("🏋️  Adversarial training")
    raw = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    if args.stats:
        with open(args.stats, "r", encoding="utf-8") as f:
            stats = data_mod.StandardizationStats.from_dict(json.load(f))
        if stats.feature_names and stats.feature_names != raw.feature_names:
            raise SchemaError(f"{args.stats} describes other columns than {args.data}")
        print(f"  → standardization from {args.stats}")
    else:
        stats = data_mod.fit_standardization(raw)
        print("  → standardization fitted on the training data")
    d = stats.apply(raw)
    base = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        dropout_enabled=args.dropout > 0,
    )
    hidden = _parse_hidden(args.hidden)
    start = init_model(d.d, 2, hidden, args.dropout, args.seed)

    surrogate = None
    if args.omega.startswith("shapley") or args.match_l2 is not None:
        print("  → training standard surrogate model")
        surrogate = train_clean(start, d, base).model
    omega = build_omega_from_spec(args.omega, d, surrogate, args.seed, args.ridge)
    print(f"  → omega: {args.omega} ({omega.kind})")

    p = parse_norm_order(args.p)
    attack = _attack_config(args, omega)

    if args.standard:
        result = train_clean(start, d, base)
        epsilon = None
    else:
        if args.match_l2 is not None:
            (epsilon,) = match_budgets(
                d, [omega], args.match_l2, replace(attack, omega=None, mode="uniform"),
                surrogate, calibration_size=args.calibration_size, p=p,
            )
            print(f"  → matched epsilon {epsilon:.6g} for mean ||delta||_2 = {args.match_l2}")
        elif args.epsilon is not None:
            epsilon = args.epsilon
        else:
            raise UsageError("train needs --epsilon, --match-l2 or --standard")
        cfg = AdvTrainConfig(
            base=base,
            budget=PerturbationBudget(epsilon, p),
            omega=omega,
            attack=attack,
            positive_fraction=args.positive_fraction,
            noise_sigma=args.noise_sigma,
        )
        result = adversarial_train(d, cfg, start)

    bundle = ModelBundle(result.model, stats, None if args.standard else omega, epsilon, p)
    save_model(bundle, args.out)
    manifest.model_sha256 = sha256_file(args.out)
    manifest.record_output(args.out)
    accuracy = float(np.mean(predict(result.model.without_dropout(), d.features) == d.labels))
    print(f"  → final loss {result.loss_trace[-1]:.4f}, train accuracy {accuracy:.4f}")
    print(f"✅ Model saved to {args.out}")
    return 0


def cmd_attack(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("⚔️  Attack")
    d = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    reference = _load_dataset(args, args.reference) if args.reference else d
    workers = get_workers(args.workers)

    raw, raw_reference = d, reference
    accs, dsrs = [], []
    for k, path in enumerate(args.model):
        bundle = load_model(path)
        d = bundle.model_space(raw)
        reference = bundle.model_space(raw_reference)
        if k == 0:
            manifest.model_sha256 = sha256_file(path)
        print(f"  → model {path}")

        if args.eps_grid:
            grid = _parse_grid(args.eps_grid)
            reports = evaluate_defense_grid(bundle.model, d, grid, _attack_config(args, None), workers=workers)
            rows = [
                {"model": path, "epsilon": eps, "clean_accuracy": r.clean_accuracy,
                 "defense_success_rate": r.defense_success_rate, "n_attacked": r.n_attacked}
                for eps, r in reports.items()
            ]
            for row in rows:
                print(f"    ε={row['epsilon']:<6g} D.S.R. {row['defense_success_rate']:.4f}")
            if args.out and k == 0:
                _save_frame(pd.DataFrame(rows), args.out, manifest)
            continue

        omega = _resolve_omega(args, bundle, reference)
        epsilon = _resolve_epsilon(args, bundle)
        budget = PerturbationBudget(epsilon, parse_norm_order(args.p))
        attack = _attack_config(args, omega)
        report = evaluate_defense(bundle.model, d, budget, attack, method=args.method, workers=workers)
        accs.append(report.clean_accuracy)
        dsrs.append(report.defense_success_rate)
        print(f"    clean accuracy {report.clean_accuracy:.4f}, D.S.R. {report.defense_success_rate:.4f}")

        if args.out and k == 0:
            deltas = report.deltas
            frame = pd.DataFrame({
                "index": report.indices,
                "true_label": d.labels[report.indices],
                "clean_pred": report.clean_predictions,
                "adv_pred": report.adversarial_predictions,
                "delta_l2": np.linalg.norm(deltas, axis=1),
                "omega_l2": np.linalg.norm(omega.apply(deltas), axis=1),
                "attack_loss": report.attack_loss,
            })
            for j, name in enumerate(d.feature_names):
                frame[f"d_{name}"] = deltas[:, j]
            _save_frame(frame, args.out, manifest)

    if len(accs) > 1:
        acc_mean, acc_std = summarize_runs(accs)
        dsr_mean, dsr_std = summarize_runs(dsrs)
        print(f"  → over {len(accs)} models: clean accuracy {acc_mean:.4f} ± {acc_std:.4f}, "
              f"D.S.R. {dsr_mean:.4f} ± {dsr_std:.4f}")
    print("✅ Attack finished")
    return 0


def _parse_grid(value: str) -> list[float]:
    try:
        grid = [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"Epsilon grid must be comma-separated numbers, got '{value}'") from e
    if not grid or min(grid) < 0:
        raise UsageError("Epsilon grid needs at least one non-negative value")
    return grid


def cmd_certify_lp(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("🛡️  Dual LP certification")
    raw = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    bundle = load_model(args.model)
    manifest.model_sha256 = sha256_file(args.model)
    d = bundle.model_space(raw)
    reference = bundle.model_space(_load_dataset(args, args.reference)) if args.reference else d
    omega = _resolve_omega(args, bundle, reference)
    p = parse_norm_order(args.p)
    n = d.n if args.limit is None else min(args.limit, d.n)
    x, y = d.features[:n], d.labels[:n]
    workers = get_workers(args.workers)
    print(f"  → omega {omega.kind} ({omega.source}), p={args.p}")

    if args.eps_grid:
        grid = _parse_grid(args.eps_grid)
        per_eps = certify_grid_batch(bundle.model, x, y, omega, grid, p, workers=workers)
        reports = [r for eps in grid for r in per_eps[eps]]
        for eps in grid:
            frac, marg = summarize_certification(per_eps[eps])
            print(f"    ε={eps:<8g} certified {frac:.4f}, mean margin {marg:.4f}")
    else:
        epsilon = _resolve_epsilon(args, bundle)
        enclosing = None
        if args.inscribe:
            # --epsilon is the plain-ball radius; the omega ball is shrunk to fit inside it
            enclosing = (identity_omega(d.d), epsilon)
            epsilon = inscribed_epsilon(omega, epsilon, p)
            print(f"  → inscribed omega budget {epsilon:.6g} inside the plain ball of radius {enclosing[1]:g}")
        reports = certify_batch(bundle.model, x, y, omega, epsilon, p, workers=workers, enclosing=enclosing)
        print(f"  → ε={epsilon:g}")
    fraction, margin = summarize_certification(reports)
    print(f"  → certified {fraction:.4f} of {len(reports)}, mean margin {margin:.4f}")

    if args.out:
        classes = range(bundle.model.num_classes)
        frame = pd.DataFrame([
            {
                "index": r.index, "true_label": r.true_class, "certified": int(r.certified),
                "margin": r.margin, "epsilon": r.epsilon, "omega_kind": r.omega_kind,
                **{f"objective_{k}": r.objectives.get(k, np.nan) for k in classes},
            }
            for r in reports
        ])
        _save_frame(frame, args.out, manifest)
    print(f"✅ certified_fraction={fraction:.4f} mean_margin={margin:.4f}")
    return 0


def _noise_covariance(args: argparse.Namespace, bundle: ModelBundle, reference: Dataset) -> np.ndarray:
    name, _, arg = args.noise.partition(":")
    if name == "identity":
        return noise_covariance_isotropic(args.sigma, reference.d)
    if name == "cov":
        if not arg:
            raise UsageError("cov noise needs a file: cov:<path>")
        try:
            cov = pd.read_csv(arg, header=None).to_numpy(dtype=np.float64)
        except (pd.errors.ParserError, ValueError) as e:
            raise DataError(f"Could not read covariance file {arg}: {e}") from e
        return args.sigma**2 * cov
    omega = bundle.omega if name == "model" else build_omega_from_spec(
        args.noise, reference, bundle.model, args.seed, args.ridge
    )
    if omega is None:
        return noise_covariance_isotropic(args.sigma, reference.d)
    return noise_covariance_from_omega(omega, args.sigma)


def cmd_certify_smooth(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("🎲 Randomized smoothing certification")
    raw = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    bundle = load_model(args.model)
    manifest.model_sha256 = sha256_file(args.model)
    d = bundle.model_space(raw)
    reference = bundle.model_space(_load_dataset(args, args.reference)) if args.reference else d
    cfg = SmoothingConfig(
        _noise_covariance(args, bundle, reference),
        n0=args.n0, n=args.n, alpha=args.alpha, seed=args.seed,
    )
    n = d.n if args.limit is None else min(args.limit, d.n)
    results = certify_smoothed_batch(bundle.model, d.features[:n], cfg, workers=get_workers(args.workers))

    correct = np.array([r.prediction == y for r, y in zip(results, d.labels[:n])])
    abstained = sum(r.prediction == ABSTAIN for r in results)
    radii = np.array([r.radius for r in results])
    print(f"  → noise {args.noise} (σ={args.sigma:g}), n0={args.n0}, n={args.n}, alpha={args.alpha:g}")
    print(f"  → certified accuracy {correct.mean():.4f}, abstained {abstained}, "
          f"mean radius of correct {radii[correct].mean() if correct.any() else 0.0:.4f}")
    if args.out:
        frame = pd.DataFrame({
            "index": np.arange(n),
            "true_label": d.labels[:n],
            "prediction": [r.prediction for r in results],
            "p_a_lower": [r.p_a_lower for r in results],
            "radius": radii,
            "correct": correct.astype(int),
        })
        _save_frame(frame, args.out, manifest)
    print(f"✅ certified_fraction={correct.mean():.4f}")
    return 0


def cmd_consistency(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("📐 MD-square consistency")
    raw = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    # perturbations live in the standardized space the attacked model saw
    bundle = None
    if args.model:
        bundle = load_model(args.model)
        manifest.model_sha256 = sha256_file(args.model)
        reference = bundle.model_space(raw)
    else:
        reference, _ = data_mod.standardize(raw)

    if args.sigma_source == "model":
        if bundle is None or bundle.omega is None:
            raise UsageError("--sigma-source model needs --model trained with an omega")
        cov = noise_covariance_from_omega(bundle.omega)
        ridge = 0.0 if args.ridge is None else args.ridge
    else:
        class_filter = "negative_only" if args.sigma_source == "md-target" else "all"
        cov = data_mod.covariance(reference, class_filter)
        ridge = default_ridge(cov) if args.ridge is None else args.ridge
    g = GaussianModel.from_covariance(cov, ridge)

    attacks = pd.read_csv(args.attacks)
    columns = [f"d_{n}" for n in reference.feature_names]
    missing = [c for c in columns if c not in attacks.columns]
    if missing:
        raise SchemaError(f"Attack file lacks columns: {', '.join(missing[:5])}")
    stats = md_square_stats(g, attacks[columns].to_numpy(dtype=np.float64))
    print(f"  → {len(attacks)} perturbations against Σ from {args.sigma_source}")
    if args.out:
        _save_frame(pd.DataFrame(stats.histogram_rows()), args.out, manifest)
    print(f"✅ mean_md_square={stats.mean:.6g} mean_log_gamma={stats.mean_log_gamma:.6g}")
    return 0


def cmd_importance(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("📊 Feature importance")
    d = _load_dataset(args)
    manifest.dataset_sha256 = sha256_file(args.data)
    if args.method == "pearson":
        importance = data_mod.pearson_importance(d)
    else:
        if not args.model:
            raise UsageError("shapley importance needs --model")
        bundle = load_model(args.model)
        manifest.model_sha256 = sha256_file(args.model)
        importance = data_mod.shapley_importance(bundle.model, bundle.model_space(d), args.permutations, args.seed)
    for name, value in sorted(zip(d.feature_names, importance), key=lambda kv: -kv[1])[:10]:
        print(f"  → {name}: {value:.6f}")
    frame = pd.DataFrame({"feature_name": list(d.feature_names), "importance": importance})
    _save_frame(frame, args.out, manifest)
    print("✅ Importance written")
    return 0


def cmd_replay(args: argparse.Namespace, manifest: RunManifest) -> int:
    _banner("🔁 Replay")
    recorded = RunManifest.load(args.manifest)
    if recorded.command == "replay":
        raise UsageError("A replay manifest cannot be replayed")
    print(f"  → re-running: {' '.join(recorded.argv)}")
    code = main(recorded.argv)
    if code != 0:
        return code
    bad = recorded.mismatched_outputs()
    if bad:
        for path in bad:
            print(f"❌ {path} differs from the recorded checksum", file=sys.stderr)
        raise DataError(f"{len(bad)} replayed output(s) differ from {args.manifest}")
    print(f"✅ All {len(recorded.outputs)} outputs reproduced bit-exactly")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "attack": cmd_attack,
    "certify-lp": cmd_certify_lp,
    "certify-smooth": cmd_certify_smooth,
    "consistency": cmd_consistency,
    "importance": cmd_importance,
    "replay": cmd_replay,
}


# ── Parser ───────────────────────────────────────────────────────────────


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", default=None, help="Flat TOML config file")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
    p.add_argument("--seed", type=int, default=0, help="Seed for all randomness (default: %(default)s)")
    p.add_argument("--workers", type=int, default=None, help="Thread-pool size (default: $NUROBUST_WORKERS or 8)")
    p.add_argument("--manifest", default=None, help="Run manifest path (default: <out>.manifest.json)")
    if data:
        p.add_argument("--data", required=True, help="Dataset CSV with a header row")
        p.add_argument("--label", default="label", help="Label column (default: %(default)s)")
        p.add_argument("--drop", default="", help="Comma-separated columns to discard")


def _add_attack_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=10, help="PGD steps (default: %(default)s)")
    p.add_argument("--step-size", type=float, default=None, help="PGD step size (default: epsilon/4)")
    p.add_argument("--init", choices=["zero", "random"], default="zero")
    p.add_argument("--mode", choices=["uniform", "nonuniform", "combo"], default=None,
                   help="Constraint mode (default: uniform for identity omega, else nonuniform)")
    p.add_argument("--epsilon-uniform", type=float, default=None, help="l2 radius for combo mode")
    p.add_argument("--p", default="2", help="Norm order: 2 or inf (default: %(default)s)")
    p.add_argument("--ridge", type=_non_negative_float, default=None,
                   help="Covariance ridge (default: 1e-6 * trace / d)")


def build_parser() -> CliParser:
    parser = CliParser(
        prog="nurobust",
        description="Train, attack and certify tabular classifiers under non-uniform perturbation sets",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s prepare --synthetic blobs --out data/
  %(prog)s train --data data/train.csv --omega md-target --match-l2 1.0 --out model.json
  %(prog)s attack --model model.json --data data/test.csv --out attack.csv
  %(prog)s certify-lp --model model.json --data data/test.csv --omega md-target --epsilon 0.5
  %(prog)s certify-smooth --model model.json --data data/test.csv --noise md-target --sigma 0.5
  %(prog)s replay model.json.manifest.json
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", help="Available commands")

    p = sub.add_parser("prepare", help="Split a dataset and fit its standardization")
    _add_common(p, data=False)
    p.add_argument("--input", default=None, help="Raw dataset CSV")
    p.add_argument("--synthetic", choices=["toy", "blobs"], default=None, help="Generate a synthetic dataset instead")
    p.add_argument("--samples", type=int, default=2000, help="Synthetic sample count (default: %(default)s)")
    p.add_argument("--dim", type=int, default=6, help="Feature count for blobs (default: %(default)s)")
    p.add_argument("--label", default="label")
    p.add_argument("--drop", default="", help="Comma-separated non-ordinal columns to discard")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True, help="Output directory")

    p = sub.add_parser("train", help="Train a model (adversarially unless --standard)")
    _add_common(p)
    _add_attack_options(p)
    p.add_argument("--omega", default="identity", help="identity | pearson | shapley[:n] | md | md-target | mask:a,b | import:file")
    p.add_argument("--epsilon", type=float, default=None, help="Training budget")
    p.add_argument("--match-l2", type=float, default=None, help="Pick epsilon so mean ||delta||_2 matches this target")
    p.add_argument("--calibration-size", type=int, default=256)
    p.add_argument("--standard", action="store_true", help="Plain training without perturbations")
    p.add_argument("--fraction", type=float, default=0.9, dest="positive_fraction",
                   help="Fraction of positives perturbed per epoch (default: %(default)s)")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="Gaussian augmentation of clean positives")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--hidden", default="64,32,16", help="Hidden layer widths (default: %(default)s)")
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--stats", default=None, help="standardization.json to use instead of fitting on --data")
    p.add_argument("--out", required=True, help="Model file")

    p = sub.add_parser("attack", help="Attack positives and report defense success")
    _add_common(p)
    _add_attack_options(p)
    p.add_argument("--model", action="append", required=True, help="Model file (repeat for several seeds)")
    p.add_argument("--omega", default="model", help="Omega spec, or 'model' for the training omega")
    p.add_argument("--reference", default=None, help="CSV for omega statistics (default: --data)")
    p.add_argument("--epsilon", type=float, default=None, help="Budget (default: training epsilon)")
    p.add_argument("--method", choices=["pgd", "fgsm"], default="pgd")
    p.add_argument("--eps-grid", default=None, help="Comma-separated uniform l2 budgets, e.g. 0.1,0.3,0.5,0.7")
    p.add_argument("--out", default=None, help="Attack CSV")

    p = sub.add_parser("certify-lp", help="Dual LP certification")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--omega", default="model")
    p.add_argument("--reference", default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--p", default="2")
    p.add_argument("--ridge", type=_non_negative_float, default=None)
    p.add_argument("--eps-grid", default=None, help="Comma-separated budgets; objectives are non-increasing along it")
    p.add_argument("--inscribe", action="store_true",
                   help="Treat --epsilon as a plain-ball radius and shrink the omega budget to fit inside it")
    p.add_argument("--limit", type=int, default=None, help="Certify only the first N samples")
    p.add_argument("--out", default=None, help="Certification CSV")

    p = sub.add_parser("certify-smooth", help="Randomized smoothing certification")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--noise", default="identity",
                   help="identity | model | pearson | shapley[:n] | md | md-target | import:file | cov:file")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--reference", default=None)
    p.add_argument("--ridge", type=_non_negative_float, default=None)
    p.add_argument("--n0", type=int, default=100)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default=None, help="Smoothing CSV")

    p = sub.add_parser("consistency", help="MD-square histogram of an attack CSV")
    _add_common(p)
    p.add_argument("--attacks", required=True, help="Attack CSV with d_<feature> columns")
    p.add_argument("--model", default=None, help="Attacked model; its standardization and omega are used")
    p.add_argument("--sigma-source", choices=["md", "md-target", "model"], default="md-target",
                   help="Covariance source; model uses (Omega^T Omega)^-1 of the training omega")
    p.add_argument("--ridge", type=_non_negative_float, default=None)
    p.add_argument("--out", default=None, help="Histogram CSV")

    p = sub.add_parser("importance", help="Pearson or Shapley feature importance")
    _add_common(p)
    p.add_argument("--method", choices=["pearson", "shapley"], default="pearson")
    p.add_argument("--model", default=None)
    p.add_argument("--permutations", type=int, default=DEFAULT_PERMUTATIONS)
    p.add_argument("--out", required=True, help="Importance CSV")

    p = sub.add_parser("replay", help="Re-run a manifest and compare output checksums")
    _add_common(p, data=False)
    p.add_argument("manifest", help="Run manifest JSON")
    parser.subcommands = sub.choices
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _jsonable(values: dict) -> dict:
    return {k: v for k, v in values.items() if isinstance(v, (str, int, float, bool, list, type(None)))}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return 1

    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config", default=None)
        known, _ = pre.parse_known_args(argv)
        values = load_config(get_config_path(known.config), required=known.config is not None)
        if values:
            apply_config_defaults(parser.subcommands.values(), values)

        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        _configure_logging(args.verbose)
        if args.command == "replay":
            return COMMANDS["replay"](args, RunManifest("replay", argv, {}, args.seed, __version__))

        manifest = RunManifest(
            command=args.command,
            argv=argv,
            config=_jsonable(vars(args)),
            seed=args.seed,
            tool_version=__version__,
        )
        code = COMMANDS[args.command](args, manifest)
        out = getattr(args, "out", None)
        manifest_path = args.manifest or (f"{out.rstrip('/')}.manifest.json" if out else None)
        if code == 0 and manifest_path:
            manifest.save(manifest_path)
        return code
    except RobustnessError as e:
        print(f"❌ {e}", file=sys.stderr)
        if e.suggestion:
            print(f"   {e.suggestion}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

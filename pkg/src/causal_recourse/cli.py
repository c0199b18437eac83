"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 parse error, 4 validation error,
5 no recourse found (a legitimate result), 6 verification mismatch.
"""

from __future__ import annotations

import functools
import json
import math
import sys
from pathlib import Path

import click

from . import records
from .graph import GraphError, causes, intervention_stable, markov_blanket
from .predictor import Predictor, PredictorError, fit
from .recourse import NORMS, REGIMES, RecourseError, RecourseProblem, audit_result, default_grid, solve
from .scm import Action, ScmError, counterfactual, sample
from .shift_lab import ConfigError, agent_log_text, run
from .specfile import SpecError, load_experiment_config, load_scm, scm_to_document

EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_NO_RECOURSE = 5
EXIT_VERIFY = 6

FIXTURES = Path(__file__).parent / "fixtures"


class Fail(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SpecError as exc:
            raise Fail(f"parse error: {exc}", EXIT_PARSE) from exc
        except (GraphError, ScmError, PredictorError, RecourseError, ConfigError) as exc:
            raise Fail(f"validation error: {exc}", EXIT_VALIDATION) from exc
    return wrapper


def _common(fn):
    fn = click.option("--seed", type=int, default=None, help="Random seed (required wherever sampling happens).")(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write output here instead of stdout.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["record", "text"]), default=None,
                      help="Structured record (JSON) or a text table.")(fn)
    return fn


def _settings(ctx: click.Context, seed, out, fmt) -> tuple:
    g = ctx.find_root().obj or {}
    return (seed if seed is not None else g.get("seed"),
            out if out is not None else g.get("out"),
            fmt or g.get("fmt") or "record")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise Fail(f"cannot write {out}: {exc.strerror}", EXIT_VALIDATION) from exc


def _require_seed(seed, what: str) -> int:
    if seed is None:
        raise click.UsageError(f"{what} needs an explicit --seed")
    return seed


def _names(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _assignment(text: str, what: str) -> dict[str, float]:
    """``a=1,b=2`` or ``@file.json``."""
    if text.startswith("@"):
        try:
            data = json.loads(Path(text[1:]).read_text())
        except (OSError, ValueError) as exc:
            raise SpecError(f"cannot read {what}: {exc}", "", text[1:]) from exc
        if not isinstance(data, dict):
            raise SpecError(f"{what} file must hold a JSON object", "", text[1:])
        return {k: float(v) for k, v in data.items()}
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, val = part.partition("=")
        try:
            if not sep:
                raise ValueError
            out[key.strip()] = float(val)
        except ValueError:
            raise SpecError(f"bad {what} entry {part!r}; expected name=value", what) from None
    return out


@click.group()
@_common
@click.pass_context
def main(ctx, seed, out, fmt):
    """Causal recourse toolkit: counterfactuals, stability checks, recourse search, refit experiments."""
    ctx.obj = {"seed": seed, "out": out, "fmt": fmt}


@main.command("sample")
@click.argument("spec")
@click.option("-n", "--n", "n", type=click.IntRange(min=1), required=True, help="Number of rows.")
@click.option("--include-latent", is_flag=True, help="Also export unobserved columns.")
@_common
@click.pass_context
@_guard
def cmd_sample(ctx, spec, n, include_latent, seed, out, fmt):
    """Draw an observational dataset (CSV) from SPEC."""
    seed, out, _ = _settings(ctx, seed, out, fmt)
    seed = _require_seed(seed, "sample")
    m = load_scm(spec)
    _emit(sample(m, n, seed).to_csv(include_latent), out)


@main.command("counterfactual")
@click.argument("spec")
@click.option("--instance", required=True, help="Full factual assignment: name=value,... or @file.json")
@click.option("--action", "action_text", default="", help="Interventions: name=value,...")
@_common
@click.pass_context
@_guard
def cmd_counterfactual(ctx, spec, instance, action_text, seed, out, fmt):
    """Structural counterfactual of one instance under an action."""
    _, out, fmt = _settings(ctx, seed, out, fmt)
    m = load_scm(spec)
    x = _assignment(instance, "instance")
    a = Action(_assignment(action_text, "action"))
    x_scf = counterfactual(m, x, a)
    rec = records.counterfactual_record(m, x, a, x_scf)
    if fmt == "text":
        lines = [f"{a}"] + [f"{v:>16}  {x[v]:>12.6g} -> {x_scf[v]:.6g}" for v in m.order]
        _emit("\n".join(lines) + "\n", out)
    else:
        _emit(records.dumps(rec), out)


@main.command("stability")
@click.argument("spec")
@click.option("--conditioning", default=None, help="Conditioning set S (default: Markov blanket of the target).")
@click.option("--targets", default=None, help="Intervention targets (default: every non-target node).")
@click.option("--unobserved", default=None, help="Mark these nodes unobserved before the analysis.")
@_common
@click.pass_context
@_guard
def cmd_stability(ctx, spec, conditioning, targets, unobserved, seed, out, fmt):
    """Classify interventions as stable-cause, stable-non-cause or unstable."""
    _, out, fmt = _settings(ctx, seed, out, fmt)
    m = load_scm(spec)
    g = m.graph
    hidden = _names(unobserved)
    if hidden:
        for v in hidden:
            g.parents(v)
        g = g.replace(observed=g.observed - set(hidden), actionable=g.actionable - set(hidden))
    s = _names(conditioning)
    s = markov_blanket(g) if s is None else s
    t = _names(targets)
    t = [v for v in g.nodes if v != g.target] if t is None else t
    report = intervention_stable(g, s, t)
    rec = records.stability_record(report, g, m.name)
    if fmt == "text":
        lines = [f"S = {{{', '.join(rec['conditioning_set'])}}}"]
        lines += [f"{v:>16}  {c}" for v, c in rec["classes"].items()]
        _emit("\n".join(lines) + "\n", out)
    else:
        _emit(records.dumps(rec), out)


def _text_result(rec: dict) -> str:
    r = rec["result"]
    if not r["found"]:
        return f"[{r['regime']}] no recourse found ({r['n_evaluated']} actions evaluated)\n"
    act = ", ".join(f"{k}:={v:.6g}" for k, v in r["action"].items()) or "(null action)"
    lines = [
        f"[{r['regime']}] do({act})  cost={r['cost']:.6g}",
        f"  prediction  {r['y_hat_scf']:.6g}  valid={r['valid']}",
        f"  target      {r['y_scf']:.6g}  meaningful={r['meaningful']}",
        f"  effective={r['effective']}  in_support={r['in_support']}",
    ]
    if "verification" in rec:
        lines.append(f"  verification: {'ok' if rec['verification']['ok'] else 'MISMATCH'}")
    return "\n".join(lines) + "\n"


@main.command("recourse")
@click.argument("spec")
@click.option("--instance", required=True, help="Full factual assignment: name=value,... or @file.json")
@click.option("--threshold", type=float, required=True, help="Decision threshold t.")
@click.option("--regime", type=click.Choice(REGIMES), default="AR", show_default=True)
@click.option("--predictor", "predictor_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fit", "fit_n", type=click.IntRange(min=2), default=None, help="Fit a predictor on N sampled rows.")
@click.option("--inputs", default=None, help="Predictor inputs for --fit (default: observed features).")
@click.option("--kind", type=click.Choice(["linear", "logistic"]), default="linear", show_default=True)
@click.option("--k", "k", type=click.IntRange(min=1), default=1, show_default=True, help="Max intervened nodes.")
@click.option("--norm", type=click.Choice(NORMS), default="L1", show_default=True)
@click.option("--weights", default="", help="Cost weights: name=value,...")
@click.option("--grid", "grid_items", multiple=True, help="Grid override: name=v1,v2,...")
@click.option("--grid-n", type=click.IntRange(min=10), default=10_000, show_default=True,
              help="Rows sampled to build the default decile grid.")
@click.option("--save-predictor", type=click.Path(dir_okay=False), default=None)
@click.option("--verify", is_flag=True, help="Re-derive the result from scratch and compare.")
@_common
@click.pass_context
@_guard
def cmd_recourse(ctx, spec, instance, threshold, regime, predictor_path, fit_n, inputs, kind, k, norm, weights,
                 grid_items, grid_n, save_predictor, verify, seed, out, fmt):
    """Search the cheapest recourse action for one instance."""
    seed, out, fmt = _settings(ctx, seed, out, fmt)
    m = load_scm(spec)
    g = m.graph
    x = _assignment(instance, "instance")
    if (predictor_path is None) == (fit_n is None):
        raise click.UsageError("give exactly one of --predictor or --fit")
    if predictor_path:
        try:
            predictor = Predictor.from_record(json.loads(Path(predictor_path).read_text()))
        except ValueError as exc:
            raise SpecError(str(exc), "", predictor_path) from exc
    else:
        data = sample(m, fit_n, _require_seed(seed, "--fit"))
        names = _names(inputs) or g.sort_nodes(g.observed)
        predictor = fit(data, names, kind, target=g.target)
    if save_predictor:
        _emit(records.dumps(predictor.to_record()), save_predictor)

    overrides = {}
    for item in grid_items:
        key, sep, vals = item.partition("=")
        try:
            overrides[key.strip()] = tuple(sorted(float(v) for v in vals.split(",") if v.strip()))
        except ValueError:
            raise SpecError(f"bad grid entry {item!r}", "--grid") from None
        if not sep:
            raise SpecError(f"bad grid entry {item!r}", "--grid")
    actionable = g.sort_nodes(g.actionable)
    missing = [v for v in actionable if v not in overrides]
    grid = {}
    if missing:
        grid_seed = _require_seed(seed, "the default action grid")
        grid = default_grid(m, sample(m, grid_n, grid_seed), missing, x)
    grid.update(overrides)
    problem = RecourseProblem(m, predictor, x, threshold, regime, grid, _assignment(weights, "weights") or None,
                              norm, k)
    result = solve(problem)
    audit = audit_result(result, problem) if verify else None
    rec = records.recourse_record(result, problem, scm_to_document(m), audit)
    _emit(_text_result(rec) if fmt == "text" else records.dumps(rec), out)
    if audit is not None and not audit.ok:
        raise Fail("verification failed: " + "; ".join(audit.mismatches), EXIT_VERIFY)
    if not result.found:
        click.echo("warning: no recourse found", err=True)
        ctx.exit(EXIT_NO_RECOURSE)


@main.command("verify")
@click.argument("record_path", type=click.Path(exists=True, dir_okay=False))
@_common
@click.pass_context
@_guard
def cmd_verify(ctx, record_path, seed, out, fmt):
    """Audit a saved recourse record against its embedded problem."""
    _, out, fmt = _settings(ctx, seed, out, fmt)
    try:
        rec = records.loads(Path(record_path).read_text())
        problem = records.problem_from_record(rec["problem"])
        result = records.result_from_record(rec["result"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SpecError(f"malformed recourse record: {exc}", "", record_path) from exc
    audit = audit_result(result, problem)
    out_rec = {"schema_version": records.SCHEMA_VERSION, "kind": "verification", "ok": audit.ok,
               "mismatches": list(audit.mismatches)}
    if fmt == "text":
        _emit("ok\n" if audit.ok else "MISMATCH\n" + "\n".join(audit.mismatches) + "\n", out)
    else:
        _emit(records.dumps(out_rec), out)
    if not audit.ok:
        ctx.exit(EXIT_VERIFY)


def _text_experiment(rec: dict) -> str:
    cols = ("success_rate", "improvement_rate", "gaming_rate", "honoring_rate", "mean_cost", "support_violation_rate")
    lines = [f"below threshold: {rec['n_below_threshold']}",
             f"{'regime':<6} {'sought':>7} {'valid':>7} " + " ".join(f"{c:>22}" for c in cols)]
    for name, r in rec["regimes"].items():
        vals = " ".join(f"{'nan' if r[c] is None or (isinstance(r[c], float) and math.isnan(r[c])) else format(r[c], '.4f'):>22}"
                        for c in cols)
        lines.append(f"{name:<6} {r['n_sought']:>7} {r['n_valid']:>7} {vals}")
    lines += [f"note: {n}" for n in rec["notes"]]
    return "\n".join(lines) + "\n"


@main.command("experiment")
@click.argument("config")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None, help="Per-agent log (CSV).")
@_common
@click.pass_context
@_guard
def cmd_experiment(ctx, config, log_path, seed, out, fmt):
    """Run a refit experiment from a YAML config (``builtin:insurance`` for the bundled one)."""
    seed, out, fmt = _settings(ctx, seed, out, fmt)
    if config.startswith("builtin:"):
        path = FIXTURES / f"{config.split(':', 1)[1]}_experiment.yaml"
        if not path.exists():
            raise SpecError("no bundled experiment config by that name", "", config)
        config = str(path)
    cfg = load_experiment_config(config)
    if seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=seed)
    report = run(cfg)
    rec = records.experiment_record(report)
    _emit(_text_experiment(rec) if fmt == "text" else records.dumps(rec), out)
    if log_path:
        _emit(agent_log_text(report), log_path)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

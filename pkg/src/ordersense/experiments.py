"""Scenario files, baseline-versus-perturbed runs, counterexamples and table output.

A scenario pairs a model with a baseline input vector ``X*`` and a perturbed
vector ``X`` that differs from it in exactly one coordinate. Both are analysed
(closed form for structured models, Monte Carlo otherwise), the two laws of the
changed coordinate are compared for the disp, st and ew orders, and the
ordering of the indices is audited against the applicable monotonicity result.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ._validation import DomainError
from .distributions import Transformed, expect, parse_law
from .expressions import parse_structured
from .hoeffding import Factor, StructuredFunction, decompose, phi_mix_ratios
from .models import SIGMA_FLOOR, HestonModel, VaRModel, VasicekModel
from .montecarlo import STREAM_A, STREAM_B, MonteCarloSobol, SobolEstimate, significant_digits
from .orders import check_order
from .rng import default_seed, uniforms

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioError",
    "Expectation",
    "Scenario",
    "RunReport",
    "load_scenarios",
    "bundled_scenario",
    "run_scenario",
    "run_scenarios",
    "run_counterexamples",
    "emit_table",
    "NAMED_FUNCTIONS",
    "TARGETS",
]

SCHEMA_VERSION = 1
CLOSED_FORM_DIGITS = 6
OUTSIDE_SCOPE = "outside theorem scope"
HYPOTHESES_NOT_MET = "hypotheses not met"
CONSISTENT = "consistent"
VIOLATED = "violated"
# slack when comparing exact indices in the theorem audit
AUDIT_TOL = 1e-9

TARGETS = ("table1", "table2", "table3", "table4", "counterexamples")


class ScenarioError(ValueError):
    """Malformed scenario document."""


def _g1_piecewise(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.45, 0.0, np.where(x <= 0.5, x / 10.0, x))


def _structured_registry():
    exp = Factor(np.exp, "exp", nondecreasing=True, convex=True, log_convex=True)
    identity = Factor(lambda x: np.asarray(x, dtype=float), "x", nondecreasing=True, convex=True)
    return {
        "exp_exp_product": StructuredFunction.product(
            [Factor(lambda x: np.exp(np.exp(x)), "exp(exp(x))", nondecreasing=True, convex=True, log_convex=True), exp, exp]
        ),
        "piecewise_product": StructuredFunction.product(
            [Factor(_g1_piecewise, "g1", breakpoints=(0.45, 0.5), nondecreasing=True), identity, identity]
        ),
    }


# Scalar maps referenced by name from scenario files.
NAMED_FUNCTIONS = {
    "exp": np.exp,
    "exp_sq": lambda x: np.exp(np.asarray(x, dtype=float) ** 2),
    "capped_identity": lambda x: np.minimum(np.asarray(x, dtype=float), 1.0),
    "three_point": lambda x: np.interp(x, [0.0, 1.0, 10.0], [0.0, 10.0, 1.0]),
}


@dataclass(frozen=True)
class Expectation:
    """An expected value with its matching rule.

    ``mode`` is ``abs`` (|got - value| <= tol), ``factor`` (within a factor
    ``tol`` and below ``bound``), ``magnitude`` (|log10(got / value)| <= tol) or
    ``greater`` (quantity exceeds ``other``).
    """

    quantity: str
    value: float = None
    tol: float = 0.02
    mode: str = "abs"
    run: str = None
    input: str = None
    other: str = None
    bound: float = None
    provenance: str = ""

    def key(self):
        parts = [self.quantity]
        if self.input:
            parts.append(self.input)
        if self.run:
            parts.append(self.run)
        return ":".join(parts)


@dataclass(frozen=True)
class OrderExpectation:
    relation: str
    x: str
    y: str
    expect: str = "holds"
    binding: bool = True
    note: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    label: str
    kind: str  # sobol | variance-order | phi-mix-ratios
    model: dict
    input_names: tuple
    baseline: tuple
    perturbed: tuple
    method: str = "closed-form"
    samples: int = 0
    bootstrap: int = 1000
    seed: int = None
    cross_check_samples: int = 0
    expected: tuple = ()
    orders: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def changed(self):
        return [i for i, (a, b) in enumerate(zip(self.baseline, self.perturbed)) if a != b]


@dataclass(frozen=True)
class CheckResult:
    quantity: str
    value: float
    expected: str
    tolerance: str
    provenance: str
    status: str  # pass | fail | noted
    digits: int = CLOSED_FORM_DIGITS
    note: str = ""


@dataclass
class IndexRow:
    parameter: str
    baseline_law: str
    perturbed_law: str
    baseline: tuple  # (first SobolEstimate, total SobolEstimate)
    perturbed: tuple


@dataclass
class RunReport:
    scenario: str
    label: str
    method: str
    seed: int
    rows: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)
    theorem: str = OUTSIDE_SCOPE
    theorem_detail: str = ""
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self):
        return all(c.status != "fail" for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if c.status == "fail"]


# ---------------------------------------------------------------- loading


def _require(mapping, key, where):
    if key not in mapping:
        raise ScenarioError(f"{where}: missing key {key!r}")
    return mapping[key]


def _law_text(value, where):
    text = str(value)
    try:
        parse_law(text)
    except DomainError as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    return text


def _check_index_expectations(expected, names, where):
    for exp in expected:
        if exp.quantity not in ("first", "total"):
            raise ScenarioError(f"{where}: sobol expectations are 'first' or 'total', got {exp.quantity!r}")
        if exp.input not in names:
            raise ScenarioError(f"{where}: expectation refers to unknown input {exp.input!r}")
        if exp.run not in ("baseline", "perturbed"):
            raise ScenarioError(f"{where}: expectation run must be 'baseline' or 'perturbed'")


def _expectations(items, where):
    out = []
    for j, item in enumerate(items or []):
        if not isinstance(item, dict):
            raise ScenarioError(f"{where}: expectation {j} must be a mapping")
        try:
            out.append(Expectation(**item))
        except TypeError as exc:
            raise ScenarioError(f"{where}: expectation {j}: {exc}") from None
        if out[-1].mode not in ("abs", "factor", "magnitude", "greater"):
            raise ScenarioError(f"{where}: unknown expectation mode {out[-1].mode!r}")
    return tuple(out)


def _order_expectations(items, where):
    try:
        return tuple(OrderExpectation(**item) for item in items or [])
    except TypeError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _parse_document(doc, source):
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    name = str(_require(doc, "name", source))
    model = dict(doc.get("model") or {})
    names = tuple(doc.get("inputs") or ())
    est = dict(doc.get("estimation") or {})
    scenarios = []
    for idx, case in enumerate(_require(doc, "cases", source)):
        where = f"{source}: case {idx}"
        label = str(case.get("label", idx))
        kind = case.get("kind", "sobol")
        orders = _order_expectations(case.get("orders"), where)
        expected = _expectations(case.get("expected"), where)
        if kind == "sobol":
            case_model = dict(case.get("model") or model)
            case_names = tuple(case.get("inputs") or names)
            if not case_model or not case_names:
                raise ScenarioError(f"{where}: sobol cases need a model and input names")
            base = dict(_require(case, "baseline", where))
            if set(base) != set(case_names):
                raise ScenarioError(f"{where}: baseline laws must cover exactly {list(case_names)}")
            pert = dict(base)
            changes = dict(_require(case, "perturbed", where))
            if len(changes) != 1 or not set(changes) <= set(case_names):
                raise ScenarioError(f"{where}: exactly one input must be perturbed")
            pert.update(changes)
            baseline = tuple(_law_text(base[n], where) for n in case_names)
            perturbed = tuple(_law_text(pert[n], where) for n in case_names)
            case_est = {**est, **(case.get("estimation") or {})}
            method = case_est.get("method", "closed-form")
            if method not in ("closed-form", "monte-carlo"):
                raise ScenarioError(f"{where}: unknown method {method!r}")
            if method == "closed-form" and case_model.get("kind") not in ("var", "structured"):
                raise ScenarioError(f"{where}: closed form needs a structured model")
            _check_index_expectations(expected, case_names, where)
            seed = case_est.get("seed")
            scenarios.append(
                Scenario(
                    name, label, kind, case_model, case_names, baseline, perturbed, method,
                    int(float(case_est.get("samples", 0))), int(case_est.get("bootstrap", 1000)),
                    None if seed is None else int(seed), int(float(case_est.get("cross_check_samples", 0))),
                    expected, orders,
                )
            )
        elif kind == "variance-order":
            extra = {"transform": str(_require(case, "transform", where))}
            if extra["transform"] not in NAMED_FUNCTIONS:
                raise ScenarioError(f"{where}: unknown transform {extra['transform']!r}")
            laws = (_law_text(_require(case, "x", where), where), _law_text(_require(case, "y", where), where))
            scenarios.append(Scenario(name, label, kind, {}, ("x", "y"), laws, laws, expected=expected, orders=orders, extra=extra))
        elif kind == "phi-mix-ratios":
            extra = {"phi1": str(_require(case, "phi1", where)), "phi2": str(_require(case, "phi2", where))}
            for fn in extra.values():
                if fn not in NAMED_FUNCTIONS:
                    raise ScenarioError(f"{where}: unknown function {fn!r}")
            b = (_law_text(_require(case, "baseline", where), where),)
            p = (_law_text(_require(case, "perturbed", where), where),)
            scenarios.append(Scenario(name, label, kind, {}, ("x",), b, p, expected=expected, orders=orders, extra=extra))
        else:
            raise ScenarioError(f"{where}: unknown case kind {kind!r}")
    return scenarios


def load_scenarios(source):
    """Parse a scenario file (path or YAML text) into a list of :class:`Scenario`."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        path = Path(source)
        text, label = path.read_text(encoding="utf-8"), str(path)
    else:
        text, label = str(source), "<scenario>"
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{label}: {exc}") from None
    return _parse_document(doc, label)


def bundled_scenario(target):
    """Scenarios shipped with the package for ``table1`` .. ``table4`` and ``counterexamples``."""
    if target not in TARGETS:
        raise ScenarioError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    text = resources.files("ordersense").joinpath("scenarios", f"{target}.yaml").read_text(encoding="utf-8")
    return _parse_document(yaml.safe_load(text), f"{target}.yaml")


# ---------------------------------------------------------------- models


def build_model(spec, k):
    """Return ``(callable, structured function or None)`` for a model mapping."""
    kind = spec.get("kind")
    params = dict(spec.get("params") or {})
    if kind == "var":
        m = VaRModel(**params)
        return m, m.structured()
    if kind == "vasicek":
        return VasicekModel(**params), None
    if kind == "heston":
        return HestonModel(**params), None
    if kind == "structured":
        if "function" in spec:
            registry = _structured_registry()
            if spec["function"] not in registry:
                raise ScenarioError(f"unknown structured function {spec['function']!r}")
            sf = registry[spec["function"]]
        elif "expression" in spec:
            sf = parse_structured(str(spec["expression"]), k)
        else:
            raise ScenarioError("structured models need 'function' or 'expression'")
        return sf, sf
    raise ScenarioError(f"unknown model kind {kind!r}")


def _model_key(spec):
    return yaml.safe_dump(spec, sort_keys=True)


# ---------------------------------------------------------------- running


def _closed_form(sf, laws, seed, names):
    res = decompose(sf, laws)
    out = []
    for i, name in enumerate(names):
        s, st = float(res.first_order[i]), float(res.total[i])
        out.append(
            (
                SobolEstimate("first", i, s, (s, s), 0, seed, "closed-form", name),
                SobolEstimate("total", i, st, (st, st), 0, seed, "closed-form", name),
            )
        )
    return out


def _monte_carlo(model, laws, n, n_bootstrap, seed, names, n_jobs):
    est = MonteCarloSobol(n_samples=n, n_bootstrap=n_bootstrap, seed=seed, n_jobs=n_jobs).fit(model, laws, names=names)
    e = est.estimates_
    return [(e[2 * i], e[2 * i + 1]) for i in range(len(names))]


def _heston_clamps(laws, n, seed):
    """Rows of A and B whose vol-of-vol draw falls below the evaluation floor."""
    k = len(laws)
    count = 0
    for stream in (STREAM_A, STREAM_B):
        u = uniforms(seed, stream, n, k)[:, 4]
        count += int(np.count_nonzero(laws[4].sample(u) < SIGMA_FLOOR))
    return count


def _estimate_pair(scn, seed, cache, n_jobs, method=None, samples=None):
    method = method or scn.method
    k = len(scn.input_names)
    model, sf = build_model(scn.model, k)
    results, notes = [], []
    for which, laws_text in (("baseline", scn.baseline), ("perturbed", scn.perturbed)):
        key = (_model_key(scn.model), laws_text, method, samples or scn.samples, scn.bootstrap, seed)
        if key not in cache:
            laws = [parse_law(t) for t in laws_text]
            if method == "closed-form":
                cache[key] = _closed_form(sf, laws, seed, scn.input_names)
            else:
                n = samples or scn.samples
                cache[key] = _monte_carlo(model, laws, n, scn.bootstrap, seed, scn.input_names, n_jobs)
        results.append(cache[key])
        if method == "monte-carlo" and scn.model.get("kind") == "heston":
            clamps = _heston_clamps([parse_law(t) for t in laws_text], samples or scn.samples, seed)
            if clamps:
                notes.append(f"{which}: sigma clamped to {SIGMA_FLOOR:g} on {clamps} base rows")
    return results, sf, notes


def _order_reports(x, y):
    out = {}
    for relation in ("disp", "st", "ew"):
        try:
            out[relation] = check_order(x, y, relation)
        except DomainError as exc:
            out[relation] = None
            out[relation + "_error"] = str(exc)
    return out


def _audit(scn, sf, rows, orders):
    """Apply the additive or product monotonicity result when its hypotheses hold."""
    if sf is None or sf.form not in ("additive", "product"):
        return OUTSIDE_SCOPE, "model is not of additive or single-product form"
    (i,) = scn.changed
    factor = next((t[i] for t in sf.terms if i in t), None)
    xs, x = parse_law(scn.baseline[i]), parse_law(scn.perturbed[i])
    missing = []
    if sf.form == "additive":
        if factor is None or not (factor.nondecreasing and factor.convex):
            missing.append("factor not declared nondecreasing convex")
        if not (orders.get("ew") and orders["ew"].holds):
            missing.append("X* <=ew X not established")
        if not (math.isfinite(xs.left_endpoint) and xs.left_endpoint <= x.left_endpoint):
            missing.append("left endpoints not ordered")
        kind = "first"
    else:
        if factor is None or not (factor.nondecreasing and factor.log_convex):
            missing.append("log factor not declared nondecreasing convex")
        for rel in ("disp", "st"):
            if not (orders.get(rel) and orders[rel].holds):
                missing.append(f"X* <={rel} X not established")
        kind = "total"
    if missing:
        return HYPOTHESES_NOT_MET, "; ".join(missing)
    pick = 0 if kind == "first" else 1
    bad = []
    for j, row in enumerate(rows):
        b, p = row.baseline[pick].value, row.perturbed[pick].value
        if j == i and b > p + AUDIT_TOL:
            bad.append(f"{row.parameter}: {b:.6g} > {p:.6g}")
        if j != i and b < p - AUDIT_TOL:
            bad.append(f"{row.parameter}: {b:.6g} < {p:.6g}")
    if bad:
        return VIOLATED, "; ".join(bad)
    return CONSISTENT, f"{'S' if kind == 'first' else 'S_T'} ordering matches"


def _format(value, digits):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "nan"
    return f"{value:.{digits}f}"


def _digits(est):
    if est.estimator == "closed-form":
        return CLOSED_FORM_DIGITS
    return min(significant_digits(est), CLOSED_FORM_DIGITS)


def _judge(exp, got, other=None, digits=CLOSED_FORM_DIGITS):
    if got is None or not math.isfinite(got):
        return CheckResult(exp.key(), float("nan"), str(exp.value), str(exp.tol), exp.provenance, "fail", digits, "no value")
    if exp.mode == "abs":
        ok = abs(got - exp.value) <= exp.tol
        return CheckResult(exp.key(), got, f"{exp.value:g}", f"+-{exp.tol:g}", exp.provenance, "pass" if ok else "fail", digits)
    if exp.mode == "factor":
        ok = got > 0 and max(got / exp.value, exp.value / got) <= exp.tol
        if exp.bound is not None:
            ok = ok and got < exp.bound
        tol = f"x{exp.tol:g}" + (f", <{exp.bound:g}" if exp.bound is not None else "")
        return CheckResult(exp.key(), got, f"{exp.value:g}", tol, exp.provenance, "pass" if ok else "fail", digits)
    if exp.mode == "magnitude":
        ok = got > 0 and abs(math.log10(got / exp.value)) <= exp.tol
        return CheckResult(exp.key(), got, f"{exp.value:g}", f"10^+-{exp.tol:g}", exp.provenance, "pass" if ok else "fail", digits)
    ok = other is not None and got > other
    return CheckResult(exp.key(), got, f"> {exp.other}", "", exp.provenance, "pass" if ok else "fail", digits, f"{exp.other}={other:.6g}")


def _order_checks(scn, named, report):
    for oe in scn.orders:
        try:
            rep = check_order(named[oe.x], named[oe.y], oe.relation)
            verdict, note = rep.verdict, str(rep)
        except DomainError as exc:
            verdict, note = "error", str(exc)
        report.orders[f"{oe.relation}({oe.x},{oe.y})"] = verdict
        status = "pass" if verdict == oe.expect else ("fail" if oe.binding else "noted")
        report.checks.append(
            CheckResult(
                f"{oe.relation}:{oe.x}<={oe.y}", float("nan"), oe.expect, "", "", status, 0,
                (oe.note + "; " if oe.note and status != "pass" else "") + f"got {verdict}",
            )
        )


def _run_sobol(scn, seed, cache, n_jobs, samples=None):
    report = RunReport(scn.name, scn.label, scn.method, seed)
    results, sf, notes = _estimate_pair(scn, seed, cache, n_jobs, samples=samples)
    report.notes.extend(notes)
    for i, name in enumerate(scn.input_names):
        report.rows.append(IndexRow(name, scn.baseline[i], scn.perturbed[i], results[0][i], results[1][i]))
    changed = scn.changed
    orders = {}
    if changed:
        (i,) = changed
        orders = _order_reports(parse_law(scn.baseline[i]), parse_law(scn.perturbed[i]))
        for rel in ("disp", "st", "ew"):
            rep = orders.get(rel)
            report.orders[f"{rel}(baseline,perturbed)"] = rep.verdict if rep else "error"
            if rep is not None and rep.verdict == "inconclusive":
                report.notes.append(f"warning: {rel} check inconclusive")
        report.theorem, report.theorem_detail = _audit(scn, sf, report.rows, orders)
    else:
        report.theorem, report.theorem_detail = "no perturbation", "baseline and perturbed laws coincide"
    if sf is None:
        report.theorem, report.theorem_detail = OUTSIDE_SCOPE, "model has no product or additive structure"
    named = {"baseline": parse_law(scn.baseline[changed[0]]) if changed else None,
             "perturbed": parse_law(scn.perturbed[changed[0]]) if changed else None}
    if scn.orders:
        _order_checks(scn, named, report)
    lookup = {}
    for i, name in enumerate(scn.input_names):
        for r, run in enumerate(("baseline", "perturbed")):
            first, total = results[r][i]
            lookup[("first", name, run)] = first
            lookup[("total", name, run)] = total
    for exp in scn.expected:
        est = lookup.get((exp.quantity, exp.input, exp.run))
        if est is None:
            raise ScenarioError(f"{scn.name}/{scn.label}: unknown quantity {exp.key()!r}")
        report.checks.append(_judge(exp, est.value, digits=_digits(est)))
    if scn.cross_check_samples and sf is not None:
        mc, _, _ = _estimate_pair(scn, seed, cache, n_jobs, method="monte-carlo", samples=samples or scn.cross_check_samples)
        for exp in scn.expected:
            r = 0 if exp.run == "baseline" else 1
            i = scn.input_names.index(exp.input)
            est = mc[r][i][0 if exp.quantity == "first" else 1]
            check = _judge(exp, est.value, digits=_digits(est))
            report.checks.append(
                CheckResult(f"mc:{check.quantity}", check.value, check.expected, check.tolerance, check.provenance,
                            check.status, check.digits, f"N={est.n_samples}, CI [{est.ci95[0]:.4f}, {est.ci95[1]:.4f}]")
            )
    return report


def _run_variance_order(scn, seed):
    report = RunReport(scn.name, scn.label, "exact", seed)
    f = NAMED_FUNCTIONS[scn.extra["transform"]]
    x, y = (parse_law(t) for t in scn.baseline)
    # quantile composition; order checks on fx, fy are only meaningful for nondecreasing transforms
    fx = Transformed(x, f, True, scn.extra["transform"])
    fy = Transformed(y, f, True, scn.extra["transform"])
    values = {}
    for tag, law in (("x", x), ("y", y)):
        m = expect(f, law)
        values[f"mean_f{tag}"] = m
        values[f"var_f{tag}"] = expect(lambda t: (f(t) - m) ** 2, law)
    _order_checks(scn, {"x": x, "y": y, "fx": fx, "fy": fy}, report)
    for exp in scn.expected:
        got = values[exp.quantity]
        report.checks.append(_judge(exp, got, values.get(exp.other)))
    report.notes.append(f"left endpoints: x {x.left_endpoint:g}, y {y.left_endpoint:g}")
    return report


def _run_phi_mix(scn, seed):
    report = RunReport(scn.name, scn.label, "exact", seed)
    phi1, phi2 = NAMED_FUNCTIONS[scn.extra["phi1"]], NAMED_FUNCTIONS[scn.extra["phi2"]]
    base, pert = parse_law(scn.baseline[0]), parse_law(scn.perturbed[0])
    ratios = {"baseline": phi_mix_ratios(phi1, phi2, base), "perturbed": phi_mix_ratios(phi1, phi2, pert)}
    _order_checks(scn, {"baseline": base, "perturbed": pert}, report)
    for exp in scn.expected:
        got = ratios[exp.run][exp.quantity]
        report.checks.append(_judge(exp, got))
    return report


def run_scenario(scn, *, seed=None, cache=None, n_jobs=1, samples=None):
    """Run one scenario case and return its :class:`RunReport`.

    ``seed`` overrides the scenario's own seed, which overrides the environment default.
    ``samples`` overrides the Monte Carlo sample size.
    """
    seed = seed if seed is not None else (scn.seed if scn.seed is not None else default_seed())
    cache = {} if cache is None else cache
    start = time.perf_counter()
    if scn.kind == "sobol":
        report = _run_sobol(scn, seed, cache, n_jobs, samples)
    elif scn.kind == "variance-order":
        report = _run_variance_order(scn, seed)
    else:
        report = _run_phi_mix(scn, seed)
    report.wall_clock = time.perf_counter() - start
    return report


def run_scenarios(scenarios, **kwargs):
    cache = kwargs.pop("cache", {})
    return [run_scenario(s, cache=cache, **kwargs) for s in scenarios]


def run_counterexamples(*, seed=None):
    """Run every bundled counterexample and return one report per case."""
    return run_scenarios(bundled_scenario("counterexamples"), seed=seed)


# ---------------------------------------------------------------- output

INDEX_COLUMNS = (
    "scenario", "case", "parameter",
    "baseline_law", "baseline_S", "baseline_S_lo", "baseline_S_hi", "baseline_ST", "baseline_ST_lo", "baseline_ST_hi",
    "perturbed_law", "perturbed_S", "perturbed_S_lo", "perturbed_S_hi", "perturbed_ST", "perturbed_ST_lo", "perturbed_ST_hi",
    "method", "flags",
)
CHECK_COLUMNS = ("scenario", "case", "quantity", "value", "expected", "tolerance", "provenance", "status", "note")
SUMMARY_COLUMNS = ("scenario", "case", "theorem", "detail", "orders", "notes")


def _estimate_cells(est):
    d = _digits(est)
    return [_format(est.value, d), _format(est.ci95[0], d), _format(est.ci95[1], d)]


def _index_records(reports):
    for rep in reports:
        for row in rep.rows:
            ests = (*row.baseline, *row.perturbed)
            flags = "negative" if any(e.value < 0 for e in ests) else ""
            yield [
                rep.scenario, rep.label, row.parameter,
                row.baseline_law, *_estimate_cells(row.baseline[0]), *_estimate_cells(row.baseline[1]),
                row.perturbed_law, *_estimate_cells(row.perturbed[0]), *_estimate_cells(row.perturbed[1]),
                row.baseline[1].estimator if row.baseline[1].estimator == "closed-form" else "monte-carlo",
                flags,
            ]


def _check_records(reports):
    for rep in reports:
        for c in rep.checks:
            value = "" if not math.isfinite(c.value) else _format(c.value, c.digits) if c.digits < CLOSED_FORM_DIGITS else f"{c.value:.6g}"
            yield [rep.scenario, rep.label, c.quantity, value, c.expected, c.tolerance, c.provenance, c.status, c.note]


def _summary_records(reports):
    for rep in reports:
        orders = " ".join(f"{k}={v}" for k, v in rep.orders.items())
        yield [rep.scenario, rep.label, rep.theorem, rep.theorem_detail, orders, "; ".join(rep.notes)]


_TABLES = {
    "indices": (INDEX_COLUMNS, _index_records),
    "checks": (CHECK_COLUMNS, _check_records),
    "summary": (SUMMARY_COLUMNS, _summary_records),
}


def emit_table(reports, fmt="csv", table="indices", out=None):
    """Render reports as CSV (RFC 4180, LF line endings) or aligned text.

    ``table`` selects ``indices``, ``checks`` or ``summary``. When ``out`` is a
    path the text is written there as UTF-8; the text is returned either way.
    """
    if isinstance(reports, RunReport):
        reports = [reports]
    columns, records = _TABLES[table]
    rows = [list(map(str, r)) for r in records(reports)]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(columns)
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "text":
        widths = [max([len(c)] + [len(r[j]) for r in rows]) for j, c in enumerate(columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out is not None:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    return text

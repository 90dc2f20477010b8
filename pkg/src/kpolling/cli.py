"""Command-line front end.

Every subcommand reads one YAML file::

    params:   {lambda1: 0.2, lambda2: 0.5, mu1: 1, mu2: 1, k1: 2, k2: 2}
    path:     {omega: 1.0}
    solve:    {n1max: 80, n2max: 80, method: auto, check_truncation: false}
    vacation: {nmax: 200}
    simulate: {horizon: 1.0e+6, warmup: 0, seed: 0, batches: 20, delta: null,
               compare_exact: false}
    ht:       {nmax: 200, n1_max: 20, xi: [0.5, 1.0, 2.0]}
    converge: {deltas: [0.1, 0.05, 0.02], n1max: 60, factor: 12, method: auto,
               source: exact, replications: 3, horizon: null}
    out: results

Only ``params`` is required.  ``ht`` and ``converge`` build the perturbation
path from ``lambda1, mu1, mu2, k1, k2`` and ``path.omega``; ``lambda2`` is
not used there.  Unknown keys are rejected.

Exit codes: 0 ok, 2 model invalid, 3 numerical failure, 4 accuracy or
validation failure, 64 usage (bad flags, unreadable or malformed config).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, ctmc, harness, ht, sim, vacation
from ._io import write_csv, write_json
from .errors import KPollingError, UnstableSystemError
from .model import PerturbationPath, PollingParams, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_ACCURACY = 4
EXIT_USAGE = 64

DEFAULT_OUT = "kpolling-out"


def _float(v):
    if isinstance(v, bool):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise TypeError("expected an integer")
    return int(float(v))


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _opt(conv):
    return lambda v: None if v is None else conv(v)


def _floats(v):
    if isinstance(v, str):
        v = [x for x in v.split(",") if x.strip()]
    if not isinstance(v, (list, tuple)):
        raise TypeError("expected a list of numbers")
    return [_float(x) for x in v]


def _choice(*options):
    def conv(v):
        if v not in options:
            raise TypeError(f"expected one of {', '.join(options)}")
        return v
    return conv


REQUIRED = object()

SCHEMA = {
    "params": {
        "lambda1": (_float, REQUIRED), "lambda2": (_opt(_float), None),
        "mu1": (_float, REQUIRED), "mu2": (_float, REQUIRED),
        "k1": (_int, 1), "k2": (_int, 1),
    },
    "path": {"omega": (_opt(_float), None)},
    "solve": {
        "n1max": (_int, 80), "n2max": (_int, 80),
        "method": (_choice("auto", "direct", "iterative"), "auto"),
        "check_truncation": (_bool, False),
    },
    "vacation": {"nmax": (_int, 200)},
    "simulate": {
        "horizon": (_float, 1e6), "warmup": (_float, 0.0), "seed": (_int, 0),
        "batches": (_int, 20), "delta": (_opt(_float), None), "compare_exact": (_bool, False),
    },
    "ht": {
        "nmax": (_int, 200), "n1_max": (_int, 20),
        "xi": (_floats, [round(0.1 * i, 10) for i in range(1, 31)]),
    },
    "converge": {
        "deltas": (_floats, [0.1, 0.05, 0.02]), "n1max": (_int, 60), "factor": (_float, 12.0),
        "method": (_choice("auto", "direct", "iterative"), "auto"),
        "source": (_choice("exact", "simulated", "both"), "exact"),
        "replications": (_int, 3), "horizon": (_opt(_float), None),
        "vacation_nmax": (_int, 200),
    },
}


class UsageError(Exception):
    pass


def _where(source, node):
    m = node.start_mark
    return f"{source}:{m.line + 1}:{m.column + 1}"


def parse_config(text: str, source="<config>") -> dict:
    """Parse and validate a YAML config, filling defaults.

    Raises
    ------
    UsageError
        Malformed YAML (with line and column), unknown keys, missing
        required keys or values of the wrong type.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark or exc.context_mark
        loc = f"{source}:{m.line + 1}:{m.column + 1}" if m else source
        raise UsageError(f"{loc}: {exc.problem or exc.context}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{source}: {exc}") from None
    if not isinstance(root, yaml.MappingNode):
        raise UsageError(f"{source}: top level must be a mapping")

    cfg = {"out": None}
    nodes = {k.value: (k, v) for k, v in root.value}
    for name, (knode, vnode) in nodes.items():
        if name == "out":
            if not isinstance(data["out"], str):
                raise UsageError(f"{_where(source, vnode)}: out must be a path string")
            cfg["out"] = data["out"]
            continue
        if name not in SCHEMA:
            raise UsageError(f"{_where(source, knode)}: unknown section {name!r}")
        if not isinstance(vnode, yaml.MappingNode):
            raise UsageError(f"{_where(source, vnode)}: section {name!r} must be a mapping")
        for k, _ in vnode.value:
            if k.value not in SCHEMA[name]:
                raise UsageError(f"{_where(source, k)}: unknown key {name}.{k.value}")

    if "params" not in nodes:
        raise UsageError(f"{source}: missing required section 'params'")
    for name, fields in SCHEMA.items():
        given = data.get(name) or {}
        sub_nodes = {k.value: v for k, v in nodes[name][1].value} if name in nodes else {}
        section = {}
        for key, (conv, default) in fields.items():
            if key not in given:
                if default is REQUIRED:
                    raise UsageError(f"{source}: missing required key {name}.{key}")
                section[key] = default
                continue
            try:
                section[key] = conv(given[key])
            except (TypeError, ValueError) as exc:
                loc = _where(source, sub_nodes[key])
                raise UsageError(f"{loc}: {name}.{key}: {exc}") from None
        cfg[name] = section
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _polling_params(cfg) -> PollingParams:
    p = cfg["params"]
    if p["lambda2"] is None:
        raise UsageError("params.lambda2 is required for this command")
    return PollingParams(p["lambda1"], p["lambda2"], p["mu1"], p["mu2"], p["k1"], p["k2"])


def _path(cfg) -> PerturbationPath:
    p = cfg["params"]
    return PerturbationPath(p["lambda1"], p["mu1"], p["mu2"], p["k1"], p["k2"],
                            omega=cfg["path"]["omega"])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(out, command, cfg, files, **record):
    payload = {
        "command": command,
        "version": __version__,
        "params": cfg["params"],
        "options": {k: cfg[k] for k in record.pop("sections", ())},
        "outputs": {Path(f).name: _sha256(f) for f in files},
    }
    payload.update(record)
    return write_json(Path(out) / f"manifest_{command}.json", payload)


def cmd_validate(cfg, out=None):
    rep = validate(_polling_params(cfg))
    for name, v in rep._asdict().items():
        print(f"{name:24s} {v}")
    ok = rep.stable and rep.q2_critical_assumption
    if not rep.stable:
        print("load rho >= 1: the system is unstable")
    elif not rep.q2_critical_assumption:
        print("lambda1/k1 >= lambda2/k2: Q2 is not the queue that saturates first")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_solve(cfg, out):
    params = _polling_params(cfg)
    if params.rho >= 1:
        raise UnstableSystemError(f"load {params.rho:.6g} >= 1; no stationary distribution")
    opt = cfg["solve"]
    trunc = ctmc.TruncationSpec(opt["n1max"], opt["n2max"])
    record = {}
    if opt["check_truncation"]:
        dist, shift = ctmc.truncation_shift(params, trunc, opt["method"])
        record["truncation_shift"] = shift
    else:
        dist = ctmc.solve_polling(params, trunc, method=opt["method"])
    p1, p2, _ = ctmc.marginals(dist)
    files = [
        ctmc.to_csv(dist, out / "stationary.csv"),
        write_csv(out / "marginal_n1.csv", ["n1", "probability"],
                  ((n, float(v)) for n, v in enumerate(p1))),
        write_csv(out / "marginal_n2.csv", ["n2", "probability"],
                  ((n, float(v)) for n, v in enumerate(p2))),
    ]
    _manifest(out, "solve", cfg, files, sections=("solve",),
              truncation={"n1max": trunc.n1max, "n2max": trunc.n2max,
                          "boundary_policy": trunc.boundary_policy},
              states=int(dist.states.shape[0]),
              residuals={"stationary": dist.residual}, tail_mass=dist.tail_mass, **record)
    print(f"states {dist.states.shape[0]}  residual {dist.residual:.3e}  "
          f"tail_mass {dist.tail_mass:.3e}")
    if dist.tail_mass > harness.TAIL_FLAG:
        print("warning: truncation tail mass is large; increase n1max/n2max", file=sys.stderr)
    print(f"E[N1] {np.arange(p1.size) @ p1:.10g}  E[N2] {np.arange(p2.size) @ p2:.10g}")
    return EXIT_OK


def cmd_vacation(cfg, out):
    p = cfg["params"]
    vp = vacation.VacationParams(p["lambda1"], p["mu1"], p["mu2"], p["k1"], p["k2"])
    nmax = cfg["vacation"]["nmax"]
    sol = vacation.solve_unknowns(vp, nmax=nmax)
    files = [vacation.pmf_to_csv(sol, out / "vacation_pmf.csv"),
             vacation.phase_mass_to_csv(sol, out / "phase_mass.csv")]
    inv = sol.inverted
    _manifest(out, "vacation", cfg, files, sections=("vacation",),
              truncation={"nmax": nmax},
              residuals={"relation": sol.relation_residual,
                         "inversion": inv.inversion_residual,
                         "renormalization_shift": inv.renormalization_shift},
              tail_mass=inv.tail_mass,
              unknowns=[float(u) for u in sol.unknowns],
              roots=[[float(z.real), float(z.imag)] for z in sol.roots])
    print(f"E[N] {sol.mean_queue_length:.12g}  E[W] {vacation.mean_waiting_q1(sol):.12g}")
    print(f"relation residual {sol.relation_residual:.3e}  tail_mass {inv.tail_mass:.3e}")
    return EXIT_OK


def cmd_simulate(cfg, out, seed=None):
    params = _polling_params(cfg)
    opt = dict(cfg["simulate"])
    if seed is not None:
        opt["seed"] = seed
    cfg = dict(cfg, simulate=opt)
    config = sim.SimConfig(params, horizon=opt["horizon"], warmup=opt["warmup"],
                           seed=opt["seed"], batches=opt["batches"], delta=opt["delta"])
    est = sim.run(config)
    files = [sim.joint_pmf_to_csv(est, out / "sim_joint_pmf.csv"),
             sim.summary_to_csv(est, out / "sim_summary.csv")]
    if est.scaled_n2 is not None:
        files.append(sim.scaled_to_csv(est, out / "sim_scaled_n2.csv"))
    record = {"regenerations": est.regenerations, "short_horizon": est.short_horizon}
    residuals = {}
    tail = None
    if opt["compare_exact"]:
        so = cfg["solve"]
        dist = ctmc.solve_polling(params, ctmc.TruncationSpec(so["n1max"], so["n2max"]),
                                  method=so["method"])
        _, _, joint = ctmc.marginals(dist)
        tv = harness.total_variation(joint, est.joint_pmf)
        record["tv_exact_vs_sim"] = tv
        record["truncation"] = {"n1max": so["n1max"], "n2max": so["n2max"]}
        residuals["stationary"] = dist.residual
        tail = dist.tail_mass
    _manifest(out, "simulate", cfg, files, sections=("simulate",) + (
        ("solve",) if opt["compare_exact"] else ()), seed=opt["seed"],
        residuals=residuals, tail_mass=tail, **record)
    for name, value, hw in sim.summary_rows(est):
        print(f"{name:16s} {value:.6g} +- {hw:.2g}")
    if "tv_exact_vs_sim" in record:
        print(f"tv_exact_vs_sim  {record['tv_exact_vs_sim']:.6g}")
    return EXIT_OK


def cmd_ht(cfg, out):
    path = _path(cfg)
    eta = ht.compute_eta(path.lambda1, path.mu1, path.mu2, path.omega)
    print(f"eta {eta:.15g}")
    opt = cfg["ht"]
    limit = ht.heavy_traffic_limit(path, nmax=opt["nmax"])
    files = [ht.cdf_table_to_csv(limit, range(opt["n1_max"] + 1), opt["xi"],
                                 out / "ht_limit_cdf.csv"),
             vacation.pmf_to_csv(limit.vacation, out / "vacation_pmf.csv")]
    _manifest(out, "ht", cfg, files, sections=("path", "ht"), eta=eta,
              lambda2_limit=path.lambda2_limit,
              scaled_wait_q2_rate=ht.scaled_wait_q2_rate(limit),
              truncation={"nmax": opt["nmax"]},
              residuals={"relation": limit.vacation.relation_residual,
                         "inversion": limit.vacation.inverted.inversion_residual},
              tail_mass=limit.tail_mass)
    return EXIT_OK


def cmd_converge(cfg, out, deltas=None):
    path = _path(cfg)
    opt = dict(cfg["converge"])
    if deltas is not None:
        opt["deltas"] = deltas
    cfg = dict(cfg, converge=opt)

    def trunc_rule(delta, eta):
        return harness.default_truncation(delta, eta, n1max=opt["n1max"], factor=opt["factor"])

    rows = []
    eta = None
    if opt["source"] in ("exact", "both"):
        rep = harness.converge_exact(path, opt["deltas"], trunc_rule, method=opt["method"],
                                     vacation_nmax=opt["vacation_nmax"])
        rows += rep.rows
        eta = rep.eta
    if opt["source"] in ("simulated", "both"):
        def sim_rule(delta, eta, replication):
            kw = harness.default_sim_rule(delta, eta, replication)
            if opt["horizon"] is not None:
                kw.update(horizon=opt["horizon"], warmup=opt["horizon"] / 100)
            return kw
        rep = harness.converge_sim(path, opt["deltas"], sim_rule,
                                   replications=opt["replications"],
                                   vacation_nmax=opt["vacation_nmax"])
        rows += rep.rows
        eta = rep.eta
    report = harness.ConvergenceReport(path=path, eta=eta, rows=rows)
    f = report.to_csv(out / "convergence.csv")
    _manifest(out, "converge", cfg, [f], sections=("path", "converge"), eta=eta,
              truncation=[{"delta": r.delta, "n1max": r.n1max, "n2max": r.n2max}
                          for r in rows if r.source == "exact"],
              tail_mass=max((r.tail_mass for r in rows), default=0.0),
              unreliable_rows=[r.delta for r in rows if not r.reliable])
    print(f"eta {eta:.15g}")
    print(f"{'delta':>8s} {'source':>10s} {'tv_n1':>10s} {'ks_xi':>10s} {'indep_gap':>10s}")
    for r in rows:
        flag = "" if r.reliable else "  (unreliable)"
        print(f"{r.delta:8.4g} {r.source:>10s} {r.tv_n1:10.6f} {r.ks_xi:10.6f} "
              f"{r.indep_gap:10.6f}{flag}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "solve": cmd_solve, "vacation": cmd_vacation,
    "simulate": cmd_simulate, "ht": cmd_ht, "converge": cmd_converge,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _deltas(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise argparse.ArgumentTypeError("deltas must be positive numbers")
    return vals


def build_parser():
    parser = _Parser(prog="kpolling", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "validate": "check stability and the Q2-saturates-first ordering",
        "solve": "stationary distribution of the truncated chain",
        "vacation": "queue-length pmf of the vacation queue",
        "simulate": "discrete-event simulation",
        "ht": "heavy-traffic limit law",
        "converge": "distance to the limit law along a delta sweep",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        if name != "validate":
            p.add_argument("--out", metavar="DIR", help="output directory")
        if name == "simulate":
            p.add_argument("--seed", type=int, metavar="N")
        if name == "converge":
            p.add_argument("--deltas", type=_deltas, metavar="LIST",
                           help="comma-separated, e.g. 0.1,0.05,0.02")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            return cmd_validate(cfg)
        out = Path(getattr(args, "out", None) or cfg["out"] or DEFAULT_OUT)
        kwargs = {}
        if args.command == "simulate":
            kwargs["seed"] = args.seed
        if args.command == "converge":
            kwargs["deltas"] = args.deltas
        return COMMANDS[args.command](cfg, out, **kwargs)
    except UsageError as exc:
        print(f"kpolling: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KPollingError as exc:
        print(f"kpolling: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

    lossrisk estimate --model poisson --prior gamma --a 3 --b 1 --x 4
    lossrisk risk --model poisson --prior uniform --theta 0.5 --theta 2 --seed 1 --samples 100000
    lossrisk minimax --model gamma --alpha 3 --m 1
    lossrisk rukhin --model normal --d 4 --theta "0;0;0;0" --seed 7
    lossrisk verify

Every option may also come from a JSON object given with ``--config``; flags
win over file fields. Keys use the flag names (dashes or underscores).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np
from scipy import special, stats

from . import estimators as est
from . import losses as ls
from . import models as md
from . import oracle as orc
from . import risk as rk
from .errors import DivergenceError, DomainError, UnsupportedError
from .rng import RngStream
from .specfun import digamma

COMMANDS = ("estimate", "risk", "minimax", "rukhin", "verify")
MODELS = ("normal", "normal-unknownvar", "gamma", "poisson", "multipoisson", "negbinomial", "explocation")
PRIORS = ("uniform", "normal", "gamma", "inverse-scale", "beta2", "beta2-improper", "normal-gamma", "gamma-total")
SECONDS = ("squared", "rho-a", "rho-m", "rho-b", "rho-c")

DEFAULTS: dict[str, Any] = {
    "model": None,
    "prior": None,
    "second": "squared",
    "beta": "identity",
    "q": 1.0,
    "h": "sqrt2",
    "d": 1,
    "n": 1,
    "sigma2": 1.0,
    "alpha": None,
    "r": None,
    "a": None,
    "b": None,
    "c": None,
    "m": None,
    "mu": None,
    "tau2": None,
    "xi": None,
    "x": None,
    "s": None,
    "theta": None,
    "samples": 100_000,
    "seed": None,
    "n_list": list(rk.DEFAULT_N_LIST),
    "out": None,
    "corrupt": None,
}


class ConfigError(Exception):
    """Invalid or missing experiment configuration; the message names the field."""


def fmt(value: float) -> str:
    return f"{float(value):.12g}"


def fmt_vec(value) -> str:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return ";".join(fmt(v) for v in arr)


def parse_vec(text, field: str) -> np.ndarray:
    try:
        if isinstance(text, (int, float)):
            return np.array([float(text)])
        if isinstance(text, (list, tuple)):
            return np.array([float(v) for v in text])
        return np.array([float(v) for v in str(text).split(";") if v.strip() != ""])
    except ValueError:
        raise ConfigError(f"{field}: cannot parse {text!r} as numbers") from None


# -- parsing --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lossrisk", description="Loss estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with default field values")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int, help="Monte-Carlo sample count per theta")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--model", choices=MODELS)
        p.add_argument("--prior", choices=PRIORS)
        p.add_argument("--second", choices=SECONDS, help="second-stage loss")
        p.add_argument("--beta", choices=("identity", "power"), help="map applied to the scaled squared error")
        p.add_argument("--q", type=float, help="exponent of the power map")
        p.add_argument("--h", choices=("sqrt2", "log"), help="Rukhin h function")
        for flag in ("d", "n"):
            p.add_argument(f"--{flag}", type=int)
        for flag in ("sigma2", "alpha", "r", "a", "b", "c", "m", "tau2", "s"):
            p.add_argument(f"--{flag}", type=float)
        p.add_argument("--mu", help="prior mean vector, semicolon separated")
        p.add_argument("--xi", help="normal-gamma prior location, semicolon separated")
        p.add_argument("--x", help="observation (semicolon separated for vectors)")
        p.add_argument("--theta", action="append", help="parameter value; repeat for a grid")
        p.add_argument("--n-list", dest="n_list", help="prior sequence indices, semicolon separated")
        p.add_argument("--corrupt", help=argparse.SUPPRESS)
    return parser


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config: the file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key == "command":
                if value != args.command:
                    raise ConfigError(f"command: file says {value!r}, command line says {args.command!r}")
                continue
            if key not in cfg:
                raise ConfigError(f"{key}: unknown field")
            cfg[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    cfg["command"] = args.command
    if isinstance(cfg["n_list"], str):
        cfg["n_list"] = [int(v) for v in parse_vec(cfg["n_list"], "n-list")]
    return cfg


def need(cfg, key):
    value = cfg.get(key)
    if value is None:
        raise ConfigError(f"{key.replace('_', '-')}: required for {cfg['command']} with model {cfg.get('model')}")
    return value


def choice(cfg, key, allowed):
    value = need(cfg, key)
    if value not in allowed:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(allowed)}")
    return value


# -- building objects from the configuration --------------------------------------------


def second_loss(cfg):
    name = choice(cfg, "second", SECONDS)
    if name == "squared":
        return ls.SquaredErrorW()
    if name == "rho-b":
        return ls.RhoB()
    if name == "rho-c":
        return ls.RhoC()
    m = float(need(cfg, "m"))
    return ls.RhoA(m) if name == "rho-a" else ls.RhoM(m)


def beta_map(cfg):
    name = choice(cfg, "beta", ("identity", "power"))
    return ls.Identity() if name == "identity" else ls.Power(float(need(cfg, "q")))


def h_function(cfg):
    return ls.Sqrt2() if choice(cfg, "h", ("sqrt2", "log")) == "sqrt2" else ls.LogH()


def model_of(cfg):
    name = choice(cfg, "model", MODELS)
    if name == "normal":
        return md.NormalKnownVar(int(cfg["d"]), float(cfg["sigma2"]))
    if name == "normal-unknownvar":
        return md.NormalUnknownVar(int(cfg["d"]), int(cfg["n"]))
    if name == "gamma":
        return md.GammaModel(float(need(cfg, "alpha")))
    if name == "poisson":
        return md.PoissonModel()
    if name == "multipoisson":
        return md.MultiPoisson(int(cfg["d"]))
    if name == "negbinomial":
        return md.NegBinomial(float(need(cfg, "r")))
    return md.ExpLocation(int(cfg["n"]))


def problem(cfg):
    """(model, pair, first-stage loss, second-stage loss) described by the configuration."""
    model = model_of(cfg)
    name = cfg["model"]
    prior = cfg.get("prior")
    if name == "normal":
        prior = choice(cfg, "prior", ("uniform", "normal"))
        if prior == "uniform":
            sol = est.normal_minimax(model.d, beta_map(cfg), second_loss(cfg), model.sigma2)
            return model, sol.pair, sol.first, sol.second
        mu = parse_vec(need(cfg, "mu"), "mu")
        p = md.NormalPrior(np.broadcast_to(mu, (model.d,)), float(need(cfg, "tau2")))
        second = second_loss(cfg)
        return model, est.normal_conjugate_pair(model.d, model.sigma2, p, second), ls.SquaredError(), second
    if name == "normal-unknownvar":
        prior = prior or "uniform"
        beta = beta_map(cfg)
        if prior == "uniform":
            sol = est.normal_minimax(model.d, beta, second_loss(cfg))
            return model, sol.pair, ls.LocationScale(beta, scale=model.n), sol.second
        choice(cfg, "prior", ("uniform", "normal-gamma"))
        xi = parse_vec(need(cfg, "xi"), "xi")
        pair = est.normal_unknownvar_pair(
            model.d, model.n, xi, float(need(cfg, "c")), float(need(cfg, "a")), float(need(cfg, "b")), second_loss(cfg)
        )
        return model, pair, ls.LocationScale(), second_loss(cfg)
    if name == "gamma":
        prior = choice(cfg, "prior", ("gamma", "inverse-scale"))
        m = float(need(cfg, "m"))
        a, b = (0.0, 0.0) if prior == "inverse-scale" else (float(need(cfg, "a")), float(need(cfg, "b")))
        return model, est.gamma_pair(model.alpha, a, b, m), ls.EntropyScale(m), ls.SquaredErrorW()
    if name == "poisson":
        prior = choice(cfg, "prior", ("gamma", "uniform"))
        a, b = (1.0, 0.0) if prior == "uniform" else (float(need(cfg, "a")), float(need(cfg, "b")))
        return model, est.poisson_pair(a, b), ls.PoissonNormalized(), ls.SquaredErrorW()
    if name == "multipoisson":
        choice(cfg, "prior", ("gamma-total",))
        pair = est.multipoisson_pair(model.d, float(need(cfg, "a")), float(need(cfg, "b")))
        return model, pair, ls.MultiPoissonNormalized(), ls.SquaredErrorW()
    if name == "negbinomial":
        prior = choice(cfg, "prior", ("beta2", "beta2-improper"))
        a, b = (1.0, 0.0) if prior == "beta2-improper" else (float(need(cfg, "a")), float(need(cfg, "b")))
        return model, est.negbinomial_pair(model.r, a, b), ls.NBNormalized(model.r), ls.SquaredErrorW()
    choice(cfg, "prior", ("gamma",))
    return model, est.explocation_pair(model.n, float(need(cfg, "a"))), ls.EntropyScale(-1.0), ls.SquaredErrorW()


def observation(cfg, model):
    raw = need(cfg, "x")
    if isinstance(model, md.NormalUnknownVar):
        return md.NormalSufficient(parse_vec(raw, "x"), float(need(cfg, "s")))
    vec = parse_vec(raw, "x")
    if isinstance(model, (md.NormalKnownVar, md.MultiPoisson, md.ExpLocation)):
        return vec
    if vec.size != 1:
        raise ConfigError(f"x: expected a scalar observation, got {raw!r}")
    return float(vec[0])


def theta_grid(cfg, model):
    raw = need(cfg, "theta")
    if isinstance(raw, (str, int, float)):
        raw = [raw]
    grid = []
    for item in raw:
        vec = parse_vec(item, "theta")
        if isinstance(model, md.NormalUnknownVar):
            if vec.size != model.d + 1:
                raise ConfigError(f"theta: expected {model.d} mean components then sigma2, got {item!r}")
            grid.append((vec[:-1], float(vec[-1])))
        elif isinstance(model, (md.NormalKnownVar, md.MultiPoisson)):
            grid.append(vec)
        else:
            if vec.size != 1:
                raise ConfigError(f"theta: expected a scalar, got {item!r}")
            grid.append(float(vec[0]))
    return grid


def theta_text(theta) -> str:
    if isinstance(theta, tuple):
        return fmt_vec(np.append(theta[0], theta[1]))
    return fmt_vec(theta)


def stream(cfg) -> RngStream:
    seed = need(cfg, "seed")
    try:
        return RngStream(int(seed))
    except DomainError as exc:
        raise ConfigError(f"seed: {exc}") from None


def samples(cfg) -> int:
    n = cfg["samples"]
    if not (isinstance(n, int) and n >= 100):
        raise ConfigError(f"samples: must be an integer >= 100, got {n!r}")
    return n


# -- commands -------------------------------------------------------------------------


def risk_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["theta", "mean", "std_error", "n_samples"])
    for r in rows:
        writer.writerow([theta_text(r.theta), fmt(r.mean), fmt(r.std_error), r.n_samples])
    return buf.getvalue()


def cmd_estimate(cfg) -> str:
    model, pair, _, _ = problem(cfg)
    x = observation(cfg, model)
    g, l = pair(x)
    return f"gamma_hat,l_hat\n{fmt_vec(g)},{fmt(l)}\n"


def cmd_risk(cfg) -> str:
    model, pair, first, second = problem(cfg)
    rng, n = stream(cfg), samples(cfg)
    rows = [rk.mc_risk(model, th, pair, first, second, rng, n) for th in theta_grid(cfg, model)]
    return risk_csv(rows)


def cmd_rukhin(cfg) -> str:
    model = model_of(cfg)
    kwargs = {}
    if isinstance(model, md.GammaModel):
        kwargs["m"] = float(need(cfg, "m"))
    if isinstance(model, md.NormalKnownVar):
        kwargs["beta"] = beta_map(cfg)
    sol = est.rukhin_solution(model, h_function(cfg), **kwargs)
    rng, n = stream(cfg), samples(cfg)
    rows = [rk.mc_rukhin_risk(model, th, sol.pair, sol.first, sol.second, rng, n) for th in theta_grid(cfg, model)]
    return risk_csv(rows)


def report_json(report: rk.ConvergenceReport) -> str:
    seq = ",".join(f"[{int(n)},{fmt(r)}]" for n, r in report.sequence)
    return (
        f'{{"sequence":[{seq}],"target":{fmt(report.target)},'
        f'"final_gap":{fmt(report.final_gap)},"converged":{"true" if report.converged else "false"}}}\n'
    )


def cmd_minimax(cfg) -> str:
    name = choice(cfg, "model", ("normal", "gamma", "multipoisson", "negbinomial"))
    n_list = [int(v) for v in cfg["n_list"]]
    if name == "gamma":
        report = rk.gamma_bayes_risk_sequence(float(need(cfg, "alpha")), float(need(cfg, "m")), n_list)
    elif name == "normal":
        beta = beta_map(cfg)
        rng = stream(cfg) if not isinstance(beta, (ls.Identity, ls.Power)) else None
        report = rk.normal_bayes_risk_sequence(int(cfg["d"]), beta, second_loss(cfg), n_list, rng=rng)
    else:
        report = rk.rukhin_bayes_risk_sequence(model_of(cfg), h_function(cfg), n_list)
    return report_json(report)


def verification_cases():
    """(name, closed-form value, oracle thunk) triples checked by ``verify``."""
    quad = orc.QuadratureSpec()
    cases = [
        (
            "poisson a=3 b=1 x=4",
            est.poisson_pair(3, 1).l_hat_constant,
            lambda: orc.oracle_bayes_loss_estimate(md.PoissonModel(), md.GammaPrior(3, 1), 4, ls.PoissonNormalized(), ls.SquaredErrorW(), quad).value,
        ),
        (
            "gamma alpha=3 prior 1/theta m=1 x=2",
            est.gamma_pair(3, 0, 0, 1).l_hat_constant,
            lambda: orc.oracle_bayes_loss_estimate(md.GammaModel(3), md.InverseScalePrior(), 2.0, ls.EntropyScale(1), ls.SquaredErrorW(), quad).value,
        ),
        (
            "negbinomial r=2 a=2 b=1 x=5",
            est.negbinomial_pair(2, 2, 1).l_hat_constant,
            lambda: orc.oracle_bayes_loss_estimate(md.NegBinomial(2), md.BetaIIPrior(2, 1, 2), 5, ls.NBNormalized(2), ls.SquaredErrorW(), quad).value,
        ),
        (
            "explocation n=3 a=2",
            est.explocation_pair(3, 2).l_hat_constant,
            lambda: orc.oracle_bayes_loss_estimate(md.ExpLocation(3), md.GammaPrior(2, 3), np.array([1.2, 2.0, 3.5]), ls.EntropyScale(-1), ls.SquaredErrorW(), quad).value,
        ),
    ]
    chi2 = orc.DensityLaw(stats.chi2(5).pdf)
    for label, second in (("squared", ls.SquaredErrorW()), ("rho-a m=-1", ls.RhoA(-1)), ("rho-a m=1", ls.RhoA(1)), ("rho-b", ls.RhoB()), ("rho-c", ls.RhoC())):
        cases.append(
            (
                f"normal d=5 tau0^2=1 {label}",
                est.normal_conjugate_pair(5, 1.0, md.UniformPrior(), second).l_hat_constant,
                lambda second=second: orc.oracle_closed_second_stage(chi2, second),
            )
        )
    cases.append(("normal d=5 rho-c spot value", 2.0 * math.exp(digamma(2.5)), lambda: 2.0 * math.exp(float(special.psi(2.5)))))
    return cases


def cmd_verify(cfg) -> tuple[str, bool]:
    lines = []
    failures = 0
    cases = verification_cases()
    for name, closed, oracle in cases:
        if cfg.get("corrupt") and cfg["corrupt"] in name:
            closed *= 1.01
        try:
            ref = oracle()
            ok = abs(closed - ref) <= 1e-6 * abs(ref)
        except (DivergenceError, DomainError) as exc:
            ref, ok = float("nan"), False
            name = f"{name} ({exc})"
        failures += not ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: closed={fmt(closed)} oracle={fmt(ref)}")
    lines.append(f"passed {len(cases) - failures}/{len(cases)}")
    return "\n".join(lines) + "\n", failures == 0


def run(cfg: dict[str, Any]) -> int:
    command = cfg["command"]
    ok = True
    if command == "estimate":
        text = cmd_estimate(cfg)
    elif command == "risk":
        text = cmd_risk(cfg)
    elif command == "rukhin":
        text = cmd_rukhin(cfg)
    elif command == "minimax":
        text = cmd_minimax(cfg)
    else:
        text, ok = cmd_verify(cfg)
    if cfg.get("out"):
        with open(cfg["out"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(resolve(args))
    except ConfigError as exc:
        print(f"lossrisk: config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, UnsupportedError, DivergenceError) as exc:
        print(f"lossrisk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

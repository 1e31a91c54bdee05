"""Config-driven command line: validate | simulate | povm | adjoint | me | compare.

Every run writes a manifest (config, flags, package versions) and stamps its
hash into each output file, so identical manifests reproduce byte-identical
outputs.  Numbers are printed with 17 significant digits (round-trip safe).
``LINTRAJ_THREADS`` caps the trajectory fan-out.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .adjoint_kalman import (
    backward_moment_trajectory,
    crosscheck_against_povm,
    integrate_backward,
    kalman_matrices,
    moments_to_csv,
)
from .errors import LintrajError
from .lie_rep import povm_blocks, rep_of_generator
from .oracle_sme import integrate_linear_sme, integrate_me
from .parameterization import compute_generator, compute_noise_couplings
from .povm import (
    effect_from_blocks,
    effect_to_json,
    homodyne_closed_form,
    optomech_closed_form,
    retrodict_posterior,
)
from .state_engine import (
    EvolutionFactors,
    apply_evolution,
    coherent_state,
    expectation,
    fock_operators,
    fock_state,
    normalize_and_trace,
    state_to_json,
    trace_distance,
    vacuum_state,
)
from .system import spec_from_config, validate_spec
from .trajectory import (
    BlockTable,
    accumulate_integrals,
    integrals_to_json,
    record_from_csv,
    record_to_csv,
    sample_ostensible_record,
    stochastic_d,
)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _manifest(args, cfg: dict) -> tuple[dict, str]:
    import scipy

    # the output location is not part of the manifest: identical manifests
    # must reproduce byte-identical numeric outputs wherever they are written
    manifest = {
        "command": args.command,
        "config": cfg,
        "seed": getattr(args, "seed", None),
        "dt": getattr(args, "dt", None),
        "t_final": getattr(args, "t_final", None),
        "trajectories": getattr(args, "trajectories", None),
        "fock_dim": getattr(args, "fock_dim", None),
        "initial": getattr(args, "initial", None),
        "versions": {"lintraj": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    blob = json.dumps(manifest, sort_keys=True, default=str).encode()
    return manifest, hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path: str, payload: dict, stamp: str) -> None:
    payload = {"_manifest": stamp, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _initial_state(descriptor: str, n_modes: int, dim: int):
    kind, _, arg = descriptor.partition(":")
    if kind == "vacuum":
        return vacuum_state(n_modes, dim)
    if kind == "coherent":
        alphas = [complex(s) for s in arg.split(",")]
        return coherent_state(n_modes, dim, alphas)
    if kind == "fock":
        return fock_state(n_modes, dim, [int(s) for s in arg.split(",")])
    if kind == "file":
        with open(arg) as fh:
            data = json.load(fh)
        rho = (np.array(data["rho_re"]) + 1j * np.array(data["rho_im"]))
        d = int(round(np.sqrt(rho.size)))
        from .state_engine import FockDensityMatrix

        return FockDensityMatrix(n_modes=n_modes, dim_per_mode=dim,
                                 rho=rho.reshape(d, d))
    raise LintrajError(f"unknown initial state {descriptor!r}")


def _pipeline_for(spec, dt: float, steps: int):
    gen = compute_generator(spec)
    rep = rep_of_generator(gen)
    table = BlockTable(rep, dt, steps)
    couplings = compute_noise_couplings(spec)
    return table, couplings


def cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    validate_spec(spec)
    gen = compute_generator(spec)
    gen.check_block_structure()
    n = spec.n_modes
    resid = max(
        float(np.abs(gen.R - gen.R.T).max()),
        float(np.abs(gen.L - gen.L.T).max()),
        float(np.abs(gen.R[n:, n:] - gen.R[:n, :n].conj()).max()),
        float(np.abs(gen.D[n:, n:] - gen.D[:n, :n].conj()).max()),
    )
    print(f"OK: n_modes={spec.n_modes} n_channels={spec.n_channels} "
          f"efficiencies={[float(e) for e in spec.efficiencies]}")
    print(f"block symmetry residual: {_fmt(resid)}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    manifest, stamp = _manifest(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    os.makedirs(os.path.join(args.out, "states"), exist_ok=True)
    _write_json(os.path.join(args.out, "manifest.json"), manifest, stamp)

    steps = int(round(args.t_final / args.dt))
    table, couplings = _pipeline_for(spec, args.dt, steps)
    blocks = table.final_blocks()
    lpp_full = povm_blocks(blocks)
    rho0 = _initial_state(args.initial, spec.n_modes, args.fock_dim)
    a_op, _, n_op = fock_operators(args.fock_dim)

    seeds = np.random.SeedSequence(args.seed).spawn(args.trajectories)

    def one(i: int):
        rng = np.random.default_rng(seeds[i])
        record = sample_ostensible_record(spec, args.dt, args.t_final, seed=None,
                                          rng=rng)
        ints = accumulate_integrals(table, couplings, record)
        factors = EvolutionFactors.from_blocks(blocks, ints)
        evolved = apply_evolution(rho0, factors)
        normalized, trace = normalize_and_trace(evolved)
        d = stochastic_d(ints, lpp_full)
        row = {
            "traj": i,
            "weight": trace * float(np.exp(np.real(ints.h))),
            "trace": trace,
            "h_re": float(np.real(ints.h)),
            "purity": normalized.purity(),
        }
        if spec.n_modes == 1:
            row["a_re"] = float(np.real(expectation(normalized, a_op)))
            row["a_im"] = float(np.imag(expectation(normalized, a_op)))
            row["n"] = float(np.real(expectation(normalized, n_op)))
        if args.compare_oracle:
            oracle = integrate_linear_sme(spec, rho0, record)
            onorm, _ = normalize_and_trace(oracle)
            row["oracle_tdist"] = trace_distance(normalized.rho, onorm.rho)
        return record, ints, d, normalized, row

    threads = int(os.environ.get("LINTRAJ_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(args.trajectories)))
    else:
        results = [one(i) for i in range(args.trajectories)]

    record_to_csv(results[0][0], os.path.join(args.out, "records.csv"),
                  header_comment=f"manifest {stamp}")
    per_traj = []
    for i, r in enumerate(results):
        entry = integrals_to_json(r[1], r[2])
        entry["seed"] = {"master": args.seed, "spawn": i}
        per_traj.append(entry)
    _write_json(os.path.join(args.out, "integrals.json"),
                {"trajectories": per_traj}, stamp)
    rows = [r[4] for r in results]
    with open(os.path.join(args.out, "moments.csv"), "w") as fh:
        fh.write(f"# manifest {stamp}\n")
        cols = list(rows[0].keys())
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in cols) + "\n")
    for i, r in enumerate(results):
        _write_json(os.path.join(args.out, "states", f"traj_{i:04d}.json"),
                    state_to_json(r[3]), stamp)
    if args.compare_oracle:
        worst = max(row["oracle_tdist"] for row in rows)
        print(f"worst oracle trace distance: {_fmt(worst)}")
    print(f"wrote {args.trajectories} trajectories to {args.out}")
    return 0


def _effect_from_args(args, spec, cfg):
    steps_hint = getattr(args, "record", None)
    if steps_hint:
        record = record_from_csv(args.record)
    else:
        record = sample_ostensible_record(spec, args.dt, args.t_final,
                                          seed=args.seed)
    table, couplings = _pipeline_for(spec, record.dt, record.steps)
    blocks = table.final_blocks()
    ints = accumulate_integrals(table, couplings, record)
    lpp_full = povm_blocks(blocks)
    d = stochastic_d(ints, lpp_full)
    effect = effect_from_blocks(lpp_full, d)
    return record, blocks, ints, effect


def cmd_povm(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    manifest, stamp = _manifest(args, cfg)
    record, blocks, ints, effect = _effect_from_args(args, spec, cfg)
    payload = {"effect": effect_to_json(effect), "t": blocks.t,
               "flat": effect.is_flat}

    builtin = cfg.get("builtin", {})
    if builtin.get("name") == "homodyne_thermal":
        p = builtin["params"]
        lpp_cf, lb_cf, d_cf = homodyne_closed_form(
            p["gamma"], p["K"], p["eta"], blocks.t, record)
        resid = max(abs(effect.Lpp[0, 0] - lpp_cf),
                    abs(effect.Lpp_breve[0, 0] - lb_cf),
                    abs(effect.d[0] - d_cf))
        payload["closed_form_residual"] = float(resid)
        print(f"homodyne closed-form residual: {_fmt(float(resid))}")
    if builtin.get("name") == "optomech_squeezing":
        p = builtin["params"]
        mu_eff = p["mu"] * p["eta"]
        K = p["K_th"] + p["mu"] * (1 - p["eta"]) / p["gamma"]
        cf = optomech_closed_form(mu_eff, p["gamma"], K, p["chi"], blocks.t)
        payload["sigma_x2"] = cf.sigma_x2
        payload["sigma_p2"] = cf.sigma_p2
        print(f"sigma_x^2 = {_fmt(cf.sigma_x2)}  sigma_p^2 = {_fmt(cf.sigma_p2)}")
    if effect.is_flat:
        print("effect is flat (no measurement information)")
    if args.retrodict is not None:
        if args.retrodict == "flat":
            posterior = retrodict_posterior(effect)
        else:
            mean_str, _, var_str = args.retrodict.partition(":")
            prior_mean = np.array([complex(mean_str)])
            prior_cov = float(var_str or 1.0) * np.eye(2 * spec.n_modes)
            posterior = retrodict_posterior(effect, prior_mean=prior_mean,
                                            prior_cov=prior_cov)
        payload["posterior"] = {
            "mean_re": posterior.mean.real.tolist(),
            "mean_im": posterior.mean.imag.tolist(),
            "covariance": [[v if np.isfinite(v) else "inf" for v in row]
                           for row in posterior.covariance.tolist()],
        }
    out = args.out or "povm.json"
    _write_json(out, payload, stamp)
    print(f"wrote {out}")
    return 0


def cmd_adjoint(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    manifest, stamp = _manifest(args, cfg)
    record, blocks, ints, effect = _effect_from_args(args, spec, cfg)
    mats = kalman_matrices(spec)
    moments = integrate_backward(mats, record)
    report = crosscheck_against_povm(effect, moments)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    taus, xs, vs = backward_moment_trajectory(mats, record)
    moments_to_csv(os.path.join(out, "moments.csv"), taus, xs, vs,
                   header_comment=f"manifest {stamp}")
    _write_json(os.path.join(out, "crosscheck.json"),
                {"report": report,
                 "x": [v if np.isfinite(v) else "inf" for v in moments.x]},
                stamp)
    print(f"crosscheck: {report}")
    return 0


def cmd_me(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    manifest, stamp = _manifest(args, cfg)
    rho0 = _initial_state(args.initial, spec.n_modes, args.fock_dim)
    a_op, _, n_op = fock_operators(args.fock_dim)
    obs = {"n": n_op, "a": a_op} if spec.n_modes == 1 else {}
    final, series = integrate_me(spec, rho0, args.t_final, dt=args.dt,
                                 observables=obs or {"trace": np.eye(rho0.dim)})
    out = args.out or "me_moments.csv"
    ts = np.arange(len(next(iter(series.values())))) * args.dt
    with open(out, "w") as fh:
        fh.write(f"# manifest {stamp}\n")
        names = sorted(series)
        fh.write("t," + ",".join(f"{k}_re,{k}_im" for k in names) + "\n")
        for i, t in enumerate(ts):
            vals = []
            for k in names:
                vals += [np.real(series[k][i]), np.imag(series[k][i])]
            fh.write(",".join(_fmt(float(v)) for v in [t] + vals) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    spec = spec_from_config(cfg)
    manifest, stamp = _manifest(args, cfg)
    record, blocks, ints, effect = _effect_from_args(args, spec, cfg)
    rho0 = _initial_state(args.initial, spec.n_modes, args.fock_dim)
    factors = EvolutionFactors.from_blocks(blocks, ints)
    evolved = apply_evolution(rho0, factors)
    normalized, trace = normalize_and_trace(evolved)
    oracle = integrate_linear_sme(spec, rho0, record)
    onorm, otrace = normalize_and_trace(oracle)
    tdist = trace_distance(normalized.rho, onorm.rho)
    weight = trace * float(np.exp(np.real(ints.h)))
    payload = {
        "trace_distance": tdist,
        "pipeline_weighted_trace": weight,
        "oracle_trace": otrace,
        "relative_trace_error": abs(weight - otrace) / otrace,
    }
    out = args.out or "compare.json"
    _write_json(out, payload, stamp)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lintraj",
        description="Conditioned evolution and POVMs for linearly monitored "
                    "bosonic modes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, record=False):
        p.add_argument("--config", required=True, help="system config JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--t-final", dest="t_final", type=float, default=1.0)
        p.add_argument("--fock-dim", dest="fock_dim", type=int, default=20)
        p.add_argument("--initial", default="vacuum",
                       help="vacuum | coherent:z[,z2..] | fock:n[,n2..] | file:path")
        p.add_argument("--out", default=None)
        if record:
            p.add_argument("--record", default=None,
                           help="record CSV; omit to sample ostensibly")

    p = sub.add_parser("validate", help="check a system config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("simulate", help="sample an ensemble of trajectories")
    common(p)
    p.add_argument("--trajectories", type=int, default=1)
    p.add_argument("--compare-oracle", action="store_true")
    p.set_defaults(fn=cmd_simulate, out_required=True)

    p = sub.add_parser("povm", help="effect operator of the compiled measurement")
    common(p, record=True)
    p.add_argument("--retrodict", nargs="?", const="flat", default=None,
                   metavar="PRIOR",
                   help="emit the posterior; optional Gaussian prior as "
                        "'mean:variance' (complex mean, per-component "
                        "variance), default flat")
    p.set_defaults(fn=cmd_povm)

    p = sub.add_parser("adjoint", help="backward filter and POVM crosscheck")
    common(p, record=True)
    p.set_defaults(fn=cmd_adjoint)

    p = sub.add_parser("me", help="unconditioned master equation moments")
    common(p)
    p.set_defaults(fn=cmd_me)

    p = sub.add_parser("compare", help="pipeline vs brute-force oracle")
    common(p, record=True)
    p.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.out is None:
        parser.error("simulate requires --out")
    try:
        return args.fn(args)
    except LintrajError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""nvspin command-line interface.

Exit codes: 0 success, 1 a domain warning under --strict, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings

import numpy as np

from . import dipolar, dynamics, hfi, observables, readout, sites
from .errors import NVSpinError, ParseError
from .io import read_matrices, render_table

EXIT_OK, EXIT_STRICT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- argument helpers ----------------------------------------------------


def _range3(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEP, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric range {text!r}") from None


def _vec3(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric vector {text!r}") from None


def _tol4(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected a_zz,a_nd,r_cz,r_cxy tolerances")
    try:
        return sites.FamilyTolerance(*(float(p) for p in parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric tolerance {text!r}") from None


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--gamma-n", type=float, default=d(None), help="13C gyromagnetic ratio, kHz/G (env NVSPIN_GAMMA_N)")
    g.add_argument("--seed", type=int, default=d(0), help="master seed for stochastic commands")
    g.add_argument("--output", "-o", default=d(None), help="write to this path instead of stdout")
    g.add_argument("--format", choices=("csv", "json"), default=d("csv"))
    g.add_argument("--strict", action="store_true", default=d(False), help="exit 1 on domain warnings")


def _site_source(p):
    p.add_argument("--table", help="site table or JSON store (default: bundled table)")


def _hfi_flags(p, field=True):
    p.add_argument("--azz", type=float, required=True, help="A_ZZ, kHz")
    p.add_argument("--tnd", type=float, required=True, help="T_nd, kHz")
    p.add_argument("--phi", type=float, default=0.0, help="azimuth of the secular term, degrees")
    if field:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--field", type=float, help="axial field, G")
        g.add_argument("--larmor", type=float, help="nuclear Zeeman splitting gamma_n B, kHz")


def build_parser():
    top = argparse.ArgumentParser(prog="nvspin", description="NV-13C hyperfine analysis tools")
    _global_flags(top, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = top.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def cmd(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], description=help_)

    p = cmd("ingest", "parse and validate a site table; optionally write a JSON store")
    p.add_argument("--table", required=True)
    p.add_argument("--geometry", help="XYZ file in NV-PACS (vacancy at origin)")
    p.add_argument("--store", help="write the normalized JSON store here")

    p = cmd("rank", "sites ordered by zero-field lifetime tau_0")
    _site_source(p)
    p.add_argument("--top", type=int, default=10)

    p = cmd("families", "axial sites and stability families with averages")
    _site_source(p)
    p.add_argument("--tol", type=_tol4, default=sites.FamilyTolerance(), help="a_zz,a_nd,r_cz,r_cxy")
    p.add_argument("--geometry", help="XYZ file used for the 3-fold closure check")
    p.add_argument("--all", action="store_true", help="also list non-stable clusters")

    p = cmd("observables", "splittings and flip probabilities at a field or over a sweep")
    _site_source(p)
    p.add_argument("--site", type=int)
    p.add_argument("--azz", type=float)
    p.add_argument("--tnd", type=float)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--field", type=float)
    p.add_argument("--sweep", type=_range3, help="LO:HI:STEPS in G, STEPS points")

    p = cmd("endor", "rf spectrum of the nuclear transition in one electron manifold")
    _hfi_flags(p)
    p.add_argument("--sweep", type=_range3, required=True, help="LO:HI:STEP in kHz")
    p.add_argument("--rf-duration", type=float, default=0.5, help="ms")
    p.add_argument("--rabi", type=float, help="kHz (default: pi pulse)")
    p.add_argument("--manifold", type=int, choices=(1, 0, -1), default=0)

    p = cmd("xy8", "electron coherence versus number of XY8 blocks")
    _hfi_flags(p)
    p.add_argument("--tau", type=float, help="us (default: k-th resonance)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--n-max", type=int, default=16)
    p.add_argument("--contrast", type=float, default=0.3)
    p.add_argument("--pulse-duration", type=float, default=0.0, help="us; 0 = instantaneous")

    p = cmd("flip", "nuclear flip probability versus time in one electron manifold")
    _hfi_flags(p)
    p.add_argument("--manifold", type=int, choices=(1, 0, -1), default=-1)
    p.add_argument("--t-max", type=float, help="us (default: two periods)")
    p.add_argument("--points", type=int, default=201)

    p = cmd("ssr", "synthetic single-shot readout trace and dwell estimate")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--flip-prob", type=float, help="per-cycle flip probability")
    g.add_argument("--dwell", type=float, help="mean dwell time, s")
    p.add_argument("--cycles", type=int, default=2000)
    p.add_argument("--cycle-time", type=float, default=0.05, help="s")
    p.add_argument("--fidelity", type=float, default=0.98)
    p.add_argument("--bright", type=float, default=300.0)
    p.add_argument("--contrast", type=float, default=0.3)
    p.add_argument("--window", type=int, default=5)

    p = cmd("tensor", "decompose and diagonalize hfi matrices from a file")
    p.add_argument("--matrix", required=True, help="upper-triangle TSV or JSON")
    p.add_argument("--site-azimuth", type=float, help="degrees; adds the mirror residual")

    p = cmd("dipolar", "dipolar tensor of a nucleus in a point spin density")
    p.add_argument("--density", required=True, help="'x y z weight' rows")
    p.add_argument("--nucleus", type=_vec3, required=True)
    p.add_argument("--axis", type=_vec3, help="candidate principal axis for the symmetry residual")
    p.add_argument("--mirror", type=float, help="symmetrize about the vertical plane at this azimuth, degrees")
    p.add_argument("--calibrated", action="store_true", help="13C prefactor in kHz instead of 1")
    p.add_argument("--total-spin", type=float, default=1.0)
    return top


# --- commands ------------------------------------------------------------


def _records(args):
    if getattr(args, "table", None):
        return sites.read_sites(args.table)
    return sites.load_published()


def _params(args):
    sp = hfi.SecularParams(args.azz, args.tnd, math.radians(args.phi))
    if getattr(args, "larmor", None) is not None:
        return dynamics.SpinHamiltonianParams.at_larmor(sp, args.larmor, gamma_n=args.gamma_n)
    return dynamics.SpinHamiltonianParams(sp, b=args.field or 0.0, gamma_n=args.gamma_n)


def cmd_ingest(args, cfg):
    records = sites.read_sites(args.table)
    report = sites.validate(records)
    comments = report.render().rstrip("\n").splitlines()
    if args.geometry:
        with open(args.geometry, encoding="utf-8") as fh:
            geo = sites.carbon_sites(sites.read_xyz(fh, args.geometry))
        by_id = {r.id: r for r in records}
        matched = [i for i in geo if i in by_id]
        ok = sum(
            1 for i in matched if abs(math.hypot(geo[i][0], geo[i][1]) - by_id[i].r_cxy) <= sites.GEOMETRY_TOL
        )
        comments.append(f"geometry: {len(matched)} sites matched, {ok} with R_CXY within {sites.GEOMETRY_TOL} A")
    if args.store:
        with open(args.store, "w", encoding="utf-8") as fh:
            fh.write(sites.store_json(records) + "\n")
    bad = report.failures()
    if bad:
        warnings.warn(f"{len(bad)} of {len(report)} rows failed validation", UserWarning, stacklevel=1)
    cols = ("id", "delta0_ok", "tau0_ok", "geometry_ok", "ranges_ok", "delta0_calc", "delta0_gap", "nonsecular_scale")
    rows = [[getattr(c, k) for k in cols] for c in report.checks]
    return cols, rows, comments, {"summary": report.summary()}


def cmd_rank(args, cfg):
    recs = sites.rank_by_lifetime(_records(args), args.top)
    cols = ("rank", "id", "tau0", "gamma0", "delta0", "a_zz", "a_nd")
    rows = [
        [k, r.id, observables.serialize_tau(r.tau0), r.gamma0, r.delta0, r.a_zz, r.a_nd]
        for k, r in enumerate(recs, start=1)
    ]
    return cols, rows, [], None


def cmd_families(args, cfg):
    recs = _records(args)
    geo = None
    if args.geometry:
        with open(args.geometry, encoding="utf-8") as fh:
            geo = sites.carbon_sites(sites.read_xyz(fh, args.geometry))
    fams = sites.classify_families(recs, tol=args.tol, geometry=geo)
    if not args.all:
        fams = [f for f in fams if not f.label.startswith("Other")]
    cols = ("label", "n", "members", "a_zz", "a_nd", "gamma0", "delta0", "cos_zz", "r_cn", "r_cz", "r_cxy", "closed_3fold")
    rows = []
    for f in fams:
        a = sites.family_average(f, recs)
        closed = "" if f.geometry_ok is None else f.geometry_ok
        rows.append(
            [f.label, a.n, " ".join(map(str, f.member_ids)), a.a_zz, a.a_nd, a.gamma0, a.delta0, a.cos_zz, a.r_cn, a.r_cz, a.r_cxy, closed]
        )
    return cols, rows, [], None


def cmd_observables(args, cfg):
    by_site = args.site is not None
    by_hfi = args.azz is not None or args.tnd is not None
    if by_site and by_hfi:
        raise UsageError("--site cannot be combined with --azz/--tnd")
    if not by_site and (args.azz is None or args.tnd is None):
        raise UsageError("give --site ID or both --azz and --tnd")
    if args.sweep and args.field is not None:
        raise UsageError("--field cannot be combined with --sweep")
    if by_site:
        found = [r for r in _records(args) if r.id == args.site]
        if not found:
            raise UsageError(f"site {args.site} not in table")
        sp = hfi.SecularParams(found[0].a_zz, abs(found[0].a_nd))
    else:
        sp = hfi.SecularParams(args.azz, args.tnd, math.radians(args.phi))
    cols = observables.SWEEP_COLUMNS + ("tau0",)
    if args.sweep:
        lo, hi, steps = args.sweep
        if steps != int(steps):
            raise UsageError("sweep STEPS must be an integer")
        rows = observables.field_sweep(sp, (lo, hi), int(steps), args.gamma_n)
    else:
        rows = [observables.at_field(sp, observables.FieldPoint(args.field or 0.0, args.gamma_n))]
    out = [
        [r.b, r.delta0, r.delta_plus, r.delta_minus, r.delta_n, r.gamma0, r.gamma_plus, r.gamma_minus, observables.serialize_tau(r.tau0)]
        for r in rows
    ]
    flagged = [r.b for r in rows if r.near_crossing]
    notes = []
    if flagged:
        notes.append(
            f"warning: {len(flagged)} rows within {observables.CROSSING_WINDOW_GAUSS:g} G of the "
            f"{observables.AVOIDED_CROSSING_GAUSS:g} G avoided crossing"
        )
        if not args.sweep:
            warnings.warn(notes[-1], observables.NearAvoidedCrossing, stacklevel=1)
    return cols, out, notes, None


def cmd_endor(args, cfg):
    p = _params(args)
    freqs, prob = dynamics.endor_sweep(p, args.sweep, args.rf_duration, args.manifold, "up", args.rabi)
    f_m = dynamics.transition_frequency(p, args.manifold)
    peak = dynamics.endor_peak(freqs, prob)
    notes = [f"transition {f_m!r} kHz, grid peak {peak!r} kHz"]
    return ("rf_khz", "flip_probability"), list(zip(freqs, prob)), notes, {"transition_khz": f_m, "peak_khz": peak}


def cmd_xy8(args, cfg):
    p = _params(args)
    tau = args.tau if args.tau is not None else dynamics.xy8_resonance(p, args.k)
    tr = dynamics.xy8_trace(p, tau, args.n_max, args.contrast, args.pulse_duration)
    rows = [[int(r[0]), r[1], r[2]] for r in tr]
    return ("n_pulses", "coherence", "fluorescence"), rows, [f"tau {tau!r} us"], {"tau_us": tau}


def cmd_flip(args, cfg):
    p = _params(args)
    sup, t_sup = dynamics.max_flip_probability(p, args.manifold)
    t_max = args.t_max if args.t_max is not None else (4 * t_sup if t_sup > 0 else 1e3)
    t, prob = dynamics.flip_probability_trace(p, args.manifold, (0.0, t_max, args.points))
    return ("t_us", "flip_probability"), list(zip(t, prob)), [f"sup {sup!r} at t = {t_sup!r} us"], {"sup": sup}


def cmd_ssr(args, cfg):
    model = readout.SsrModel(args.fidelity, args.bright, args.contrast, args.cycle_time)
    q = args.flip_prob if args.flip_prob is not None else readout.flip_prob_for_dwell(args.dwell, args.cycle_time)
    tr = readout.ssr_trace(q, args.cycles, model, seed=args.seed, window=args.window)
    rows = [[t, int(c), int(s), int(f)] for t, c, s, f in tr.rows()]
    notes = [f"transitions {tr.transitions}, estimated dwell {tr.dwell!r} s"]
    return ("t_s", "counts", "true_state", "readback"), rows, notes, {"dwell_s": tr.dwell, "transitions": tr.transitions}


def cmd_tensor(args, cfg):
    with open(args.matrix, encoding="utf-8") as fh:
        mats = read_matrices(fh.read(), args.matrix)
    cols = ["id", "a_iso", "a_zz", "t_nd", "phi_deg", "a_xx_d", "a_yy_d", "a_zz_d", "t_axial", "rhombicity", "cos_zz"]
    if args.site_azimuth is not None:
        cols.append("mirror_residual")
    rows = []
    for mid, a in mats:
        sp = hfi.secular_params(a)
        pf = hfi.diagonalize(a)
        row = [mid, pf.a_iso, sp.a_zz, sp.t_nd, math.degrees(sp.phi), pf.a_xx_d, pf.a_yy_d, pf.a_zz_d, pf.t_axial, pf.rhombicity, pf.cos_Zz]
        if args.site_azimuth is not None:
            row.append(hfi.mirror_residual(hfi.to_site_frame(a, args.site_azimuth)))
        rows.append(row)
    return tuple(cols), rows, [], None


def cmd_dipolar(args, cfg):
    with open(args.density, encoding="utf-8") as fh:
        dens = dipolar.read_density(fh, args.total_spin, args.density)
    if args.calibrated:
        dens.check_normalization()
    if args.mirror is not None:
        dens = dipolar.mirror_about_xz(dens, args.mirror)
    c = dipolar.calibrated_constants(args.total_spin) if args.calibrated else dipolar.DipoleConstants()
    t = dipolar.t_tensor(dens, args.nucleus, c)
    cols = ["t_xx", "t_xy", "t_xz", "t_yy", "t_yz", "t_zz", "frobenius"]
    row = [t[0, 0], t[0, 1], t[0, 2], t[1, 1], t[1, 2], t[2, 2], float(np.linalg.norm(t))]
    if args.axis is not None:
        cols.append("symmetry_residual")
        row.append(dipolar.symmetry_residual(dens, args.nucleus, args.axis, c))
    return tuple(cols), [row], [], None


COMMANDS = {
    "ingest": cmd_ingest,
    "rank": cmd_rank,
    "families": cmd_families,
    "observables": cmd_observables,
    "endor": cmd_endor,
    "xy8": cmd_xy8,
    "flip": cmd_flip,
    "ssr": cmd_ssr,
    "tensor": cmd_tensor,
    "dipolar": cmd_dipolar,
}


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("output",)}
    for k, v in list(cfg.items()):
        if isinstance(v, sites.FamilyTolerance):
            cfg[k] = [v.a_zz, v.a_nd, v.r_cz, v.r_cxy]
        elif isinstance(v, tuple):
            cfg[k] = list(v)
    return cfg


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.gamma_n is None:
        args.gamma_n = observables.default_gamma_n()
    if not args.gamma_n > 0:
        print("nvspin: error: --gamma-n must be positive", file=sys.stderr)
        return EXIT_USAGE
    cfg = _config(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cols, rows, notes, extra = COMMANDS[args.command](args, cfg)
        except UsageError as exc:
            print(f"nvspin {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except ParseError as exc:
            print(f"nvspin {args.command}: parse error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except OSError as exc:
            print(f"nvspin {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except NVSpinError as exc:
            print(f"nvspin {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except ValueError as exc:
            print(f"nvspin {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    text = render_table(cols, rows, cfg, args.format, notes, extra)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for w in caught:
        print(f"nvspin: warning: {w.message}", file=sys.stderr)
    if caught and args.strict:
        return EXIT_STRICT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

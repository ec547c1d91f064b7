"""Config-driven command line front end.

    python3 -m agprop validate config.json
    python3 -m agprop run config.json [--output-dir DIR] [--jobs N] [--seed U64]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a check of the scenario failed.  Every run writes ``run_manifest.json``
listing all produced files with their SHA-256 digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import re
import sys
from pathlib import Path
from typing import NamedTuple

import jsonschema
import numpy as np
import scipy

from . import __version__
from .errors import AgpropError, ConfigError, NoBranchFoundError, NumericalError
from .flow import DEFAULT_CONDITION_CAP, DEFAULT_TOLERANCE, integrate_characteristics
from .invariants import RelationReport, relation_residuals
from .model import PhasePoint, make_model
from .packet import (COVERAGE_THRESHOLD, AnisotropicPacket, Grid, GridFunction, coherent_state,
                     observables, packet_eval)
from .propagator import DEFAULT_NODE_CAP, FlowCache, build_quadrature, kernel_quadrature, \
    propagate_state
from .reference import SplitStepConfig, l2_distance, residual_norm, split_step_solve
from .vanvleck import SHOOTING_TOLERANCE, find_branches, vanvleck_kernel, write_branch_table

__all__ = ["main", "run_scenario", "validate_config", "SCENARIOS", "CONFIG_SCHEMA"]

logger = logging.getLogger("agprop")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4

SCENARIOS = ("propagate-packet", "propagate-state", "residual-sweep", "invariants",
             "frame-check", "vanvleck", "kernel-compare")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_point = {"type": "object", "required": ["q", "p"], "additionalProperties": False,
          "properties": {"q": _vec, "p": _vec,
                         "weight": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["scenario", "model"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "model": {"type": "object", "required": ["name"], "additionalProperties": False,
                  "properties": {"name": {"type": "string"},
                                 "params": {"type": "object"}}},
        "hbar": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
        "initial": {"oneOf": [
            _point,
            {"type": "object", "required": ["components"], "additionalProperties": False,
             "properties": {"components": {"type": "array", "items": _point, "minItems": 1}}},
        ]},
        "time": {"type": "object", "required": ["T"], "additionalProperties": False,
                 "properties": {"t0": _num, "T": _pos,
                                "outputs": {"oneOf": [{"type": "integer", "minimum": 1},
                                                      {"type": "array", "items": _num,
                                                       "minItems": 1}]}}},
        "flow": {"type": "object", "additionalProperties": False,
                 "properties": {"tolerance": {"type": "number", "minimum": 1e-13,
                                              "maximum": 1e-6},
                                "condition_cap": {"type": "number", "minimum": 10}}},
        "quadrature": {"type": "object", "additionalProperties": False,
                       "properties": {"rho": _pos, "width": _pos,
                                      "spacing_factor": {"oneOf": [
                                          _pos, {"type": "array", "items": _pos, "minItems": 1}]},
                                      "node_cap": {"type": "integer", "minimum": 1}}},
        "vanvleck": {"type": "object", "additionalProperties": False,
                     "properties": {"y": {"anyOf": [_vec, {"type": "array", "items": _vec}]},
                                    "x": {"anyOf": [_vec, {"type": "array", "items": _vec}]},
                                    "search_box": {"oneOf": [_pos, {
                                        "type": "array", "minItems": 2, "maxItems": 2,
                                        "items": _vec}]},
                                    "n_starts": {"type": "integer", "minimum": 1},
                                    "tol": {"type": "number", "exclusiveMinimum": 0,
                                            "maximum": 1e-4},
                                    "maslov_method": {"enum": ["crossings", "index"]}}},
        "grid": {"type": "object", "additionalProperties": False,
                 "properties": {"box": {"oneOf": [
                     {"const": "auto"},
                     {"type": "array", "minItems": 2, "maxItems": 2, "items": _vec}]},
                     "n": {"type": "integer", "minimum": 2},
                     "n_sigma": _pos}},
        "reference": {"type": "object", "additionalProperties": False,
                      "properties": {"dt": _pos}},
        "checks": {"type": "object"},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"directory": {"type": "string"},
                                  "formats": {"type": "array",
                                              "items": {"enum": ["csv", "json"]}}}},
    },
}

# sections each scenario cannot run without
_REQUIRED = {
    "propagate-packet": ("hbar", "initial", "time"),
    "propagate-state": ("hbar", "initial", "time", "quadrature"),
    "residual-sweep": ("hbar", "initial", "time"),
    "invariants": ("initial", "time"),
    "frame-check": ("hbar", "initial", "quadrature"),
    "vanvleck": ("hbar", "time", "vanvleck"),
    "kernel-compare": ("hbar", "time", "vanvleck", "quadrature"),
}
_LIST_HBAR = ("residual-sweep", "kernel-compare", "vanvleck")


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def validate_config(doc) -> list:
    """Every violated constraint as ``(json_pointer, message)``; empty when valid.

    No computation is performed beyond constructing the model to check its
    parameters.
    """
    report = []
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        path = list(err.absolute_path)
        if err.validator == "required":
            m = re.match(r"'(.+)' is a required property", err.message)
            if m:
                path.append(m.group(1))
        report.append((_pointer(path), err.message))
    if not isinstance(doc, dict):
        return report
    scen = doc.get("scenario")
    for sec in _REQUIRED.get(scen, ()) if isinstance(scen, str) else ():
        if sec not in doc:
            report.append((f"/{sec}", f"section required by scenario {scen!r}"))
    if report:
        return report
    try:
        model = make_model(doc["model"]["name"], doc["model"].get("params"))
    except ConfigError as exc:
        report.append((exc.path, str(exc).split(": ", 1)[-1]))
        model = None
    if isinstance(doc.get("hbar"), list) and scen not in _LIST_HBAR:
        report.append(("/hbar", f"scenario {scen!r} takes a single hbar"))
    if scen == "residual-sweep" and len(_as_list(doc.get("hbar", []))) < 2:
        report.append(("/hbar", "a sweep needs at least two values"))

    quad = doc.get("quadrature", {})
    if "rho" in quad or "width" in quad:
        rho, width = quad.get("rho", 6.0), quad.get("width", 1.0)
        if not width < rho:
            report.append(("/quadrature/width", "width must be smaller than rho"))
    grid = doc.get("grid", {})
    n = grid.get("n")
    if n is not None and n & (n - 1):
        report.append(("/grid/n", "points per axis must be a power of two"))
    box = grid.get("box")
    if isinstance(box, list) and len(box) == 2:
        lo, hi = np.atleast_1d(box[0]), np.atleast_1d(box[1])
        if lo.shape != hi.shape or np.any(hi <= lo):
            report.append(("/grid/box", "box needs hi > lo in every component"))

    if model is not None:
        d = model.dim
        init = doc.get("initial", {})
        comps = init.get("components", [init] if "q" in init else [])
        for k, c in enumerate(comps):
            base = "/initial" + (f"/components/{k}" if "components" in init else "")
            for key in ("q", "p"):
                if np.atleast_1d(c[key]).size != d:
                    report.append((f"{base}/{key}", f"expected {d} components"))
        vv = doc.get("vanvleck", {})
        for key in ("x", "y"):
            if key in vv:
                pts = _points(vv[key], d)
                if pts is None:
                    report.append((f"/vanvleck/{key}", f"expected points with {d} components"))
        if scen == "vanvleck":
            for key in ("x", "y"):
                if key not in vv:
                    report.append((f"/vanvleck/{key}", "required by scenario 'vanvleck'"))
                elif (pts := _points(vv[key], d)) is not None and len(pts) != 1:
                    report.append((f"/vanvleck/{key}", "scenario 'vanvleck' takes one point"))
        if scen == "kernel-compare":
            for key in ("x", "y"):
                if key not in vv:
                    report.append((f"/vanvleck/{key}", "required by scenario 'kernel-compare'"))
        if scen in ("propagate-packet", "propagate-state", "residual-sweep") and \
                "reference" in doc and model.mechanical_form() is None:
            report.append(("/reference", "the reference solver needs a mechanical model"))
        if scen == "residual-sweep" and model.mechanical_form() is None:
            report.append(("/model/name", "the residual meter needs a mechanical model"))

    time_ = doc.get("time", {})
    outs = time_.get("outputs")
    if isinstance(outs, list):
        t0, T = time_.get("t0", 0.0), time_.get("T", 0.0)
        arr = np.asarray(outs, float)
        if np.any(arr < t0) or np.any(arr > t0 + T) or np.any(np.diff(arr) <= 0):
            report.append(("/time/outputs", "outputs must increase within [t0, t0 + T]"))
    return report


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _points(spec, d):
    """Normalize a point or list of points to shape (n, d); None on mismatch."""
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if d == 1 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != d:
        return None
    return arr


# -- output helpers ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


class _Output:
    """Collects files written during a run."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def grid_function(self, name, f: GridFunction):
        f.to_csv(self.path(name))
        if f.grid.dim > 1:
            self.files.append(name + ".json")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o


def _check(name, value, passed, **limits):
    return {"name": name, "value": value, "passed": bool(passed), **limits}


# -- scenario helpers ------------------------------------------------------------

class _Timed(NamedTuple):
    packet: AnisotropicPacket
    t: float


class _Ctx:
    def __init__(self, doc, out, jobs, seed):
        self.doc, self.out, self.jobs, self.seed = doc, out, jobs, seed
        self.model = make_model(doc["model"]["name"], doc["model"].get("params"))
        flow = doc.get("flow", {})
        self.tol = flow.get("tolerance", DEFAULT_TOLERANCE)
        self.cap = flow.get("condition_cap", DEFAULT_CONDITION_CAP)
        self.checks_cfg = doc.get("checks", {})

    @property
    def hbar(self):
        return self.doc.get("hbar")

    def times(self):
        tm = self.doc["time"]
        t0, T = float(tm.get("t0", 0.0)), float(tm["T"])
        outs = tm.get("outputs", 1)
        if isinstance(outs, int):
            # n equally spaced samples of [t0, t0 + T]; a single sample is the end point
            times = np.linspace(t0, t0 + T, outs) if outs > 1 else np.array([t0 + T])
        else:
            times = np.asarray(outs, float)
        return t0, T, times

    def components(self):
        init = self.doc["initial"]
        comps = init.get("components", [init])
        d = self.model.dim
        out = []
        for c in comps:
            w = c.get("weight", [1.0, 0.0])
            out.append((np.atleast_1d(np.asarray(c["q"], float)).reshape(d),
                        np.atleast_1d(np.asarray(c["p"], float)).reshape(d), complex(*w)))
        return out

    def quadrature(self, hbar, c=None):
        q = self.doc.get("quadrature", {})
        c = c if c is not None else _as_list(q.get("spacing_factor", 0.5))[0]
        return build_quadrature(q.get("rho", 6.0), q.get("width", 1.0), hbar, c,
                                self.model.dim, q.get("node_cap", DEFAULT_NODE_CAP))

    def grid(self, centers, covs):
        g = self.doc.get("grid", {})
        n = g.get("n", 1024)
        box = g.get("box", "auto")
        d = self.model.dim
        if box == "auto":
            ns = g.get("n_sigma", 12.0)
            lo = np.full(d, np.inf)
            hi = np.full(d, -np.inf)
            for c, cov in zip(centers, covs):
                s = np.sqrt(np.diag(np.atleast_2d(cov)))
                lo = np.minimum(lo, c - ns * s)
                hi = np.maximum(hi, c + ns * s)
            # one common box per axis keeps the grid isotropic in resolution
            return Grid(tuple(lo), tuple(hi), n)
        return Grid(tuple(np.atleast_1d(box[0]).astype(float) * np.ones(d)),
                    tuple(np.atleast_1d(box[1]).astype(float) * np.ones(d)), n)


def _initial_state(ctx, grid, hbar):
    psi = np.zeros(grid.shape, complex)
    for q, p, w in ctx.components():
        psi += w * coherent_state(grid, q, p, hbar).values
    return GridFunction(grid, psi).normalized()


def _run_propagate_packet(ctx):
    out, model, hbar = ctx.out, ctx.model, float(ctx.hbar)
    (q0, p0, _), = ctx.components()[:1]
    x0 = PhasePoint(q0, p0)
    t0, T, times = ctx.times()
    traj = integrate_characteristics(model, x0, t0, T, times, ctx.tol, ctx.cap)
    traj.to_csv(out.path("trajectory.csv"))
    packets = [AnisotropicPacket.from_state(s, x0, hbar) for s in traj.states]
    d = model.dim
    idx = [f"{i}{j}" for i in range(d) for j in range(d)]
    rows = []
    for s, pk in zip(traj.states, packets):
        ob = observables(pk)
        rows.append([s.t, *ob.mean_q, *ob.mean_p, *ob.cov_q.ravel(), *ob.cov_p.ravel(),
                     *ob.uncertainty_products()])
    out.csv("observables.csv",
            ["t"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)]
            + [f"cov_q{k}" for k in idx] + [f"cov_p{k}" for k in idx]
            + [f"dq_dp{i}" for i in range(d)], rows)
    checks = []
    summary = {"states": len(traj), "accepted_steps": traj.accepted_steps,
               "rejected_steps": traj.rejected_steps, "max_condition": traj.max_condition}
    if "grid" in ctx.doc or "reference" in ctx.doc:
        grid = ctx.grid([pk.center.q for pk in packets],
                        [pk.position_covariance() for pk in packets])
        vals = [packet_eval(grid, pk) for pk in packets]
        for k, f in enumerate(vals):
            out.grid_function(f"packet_{k:03d}.csv", f)
        if "reference" in ctx.doc:
            cfg = SplitStepConfig.from_model(model, grid, ctx.doc["reference"].get("dt", 1e-4),
                                             hbar)
            ts = [s.t for s in traj.states]
            ref = split_step_solve(cfg, vals[0], ts[0], ts[1:]) if len(ts) > 1 else []
            ref = [vals[0]] + (ref if isinstance(ref, list) else [ref])
            dist = [l2_distance(a, b) for a, b in zip(vals, ref)]
            out.csv("comparison.csv", ["t", "l2_distance", "norm_packet", "norm_reference"],
                    [[t, dd, a.norm(), b.norm()] for t, dd, a, b in zip(ts, dist, vals, ref)])
            limit = ctx.checks_cfg.get("max_l2_distance", 1e-6)
            checks.append(_check("max_l2_distance", max(dist), max(dist) <= limit, limit=limit))
            summary["max_l2_distance"] = max(dist)
    return summary, checks


def _nearest(packets, t):
    """Index of the packet whose orbit time is ``t``."""
    return int(np.argmin([abs(pk_t - t) for pk_t in (pk.t for pk in packets)]))


def _run_propagate_state(ctx):
    out, model, hbar = ctx.out, ctx.model, float(ctx.hbar)
    t0, T, times = ctx.times()
    comps = ctx.components()
    # auto box: initial components and their single-packet images at every output time
    centers, covs, singles = [], [], []
    for q, p, w in comps:
        traj = integrate_characteristics(model, PhasePoint(q, p), t0, T, times, ctx.tol, ctx.cap)
        pks = [_Timed(AnisotropicPacket.from_state(s, traj.initial, hbar), s.t)
               for s in traj.states]
        singles.append((w, pks))
        centers += [pk.packet.center.q for pk in pks]
        covs += [pk.packet.position_covariance() for pk in pks]
    grid = ctx.grid(centers, covs)
    psi0 = _initial_state(ctx, grid, hbar)
    quad = ctx.quadrature(hbar)
    cache = FlowCache(model, quad, t0, ctx.tol, ctx.cap)
    states = [propagate_state(model, psi0, t0, t, quad, cache, tolerance=ctx.tol, jobs=ctx.jobs)
              for t in times]
    for k, f in enumerate(states):
        out.grid_function(f"state_{k:03d}.csv", f)

    # the superposition of independently propagated single packets is the oracle
    raw0 = sum(w * coherent_state(grid, pks[0].packet.initial.q, pks[0].packet.initial.p,
                                  hbar).values
               for w, pks in singles)
    nrm = GridFunction(grid, raw0).norm()
    rows, devs = [], []
    for t, f in zip(times, states):
        ref_vals = sum(w * packet_eval(grid, pks[_nearest(pks, t)].packet).values
                       for w, pks in singles) / nrm
        dev = l2_distance(f, GridFunction(grid, ref_vals))
        devs.append(dev)
        rows.append([t, f.norm(), dev])
    header = ["t", "norm", "l2_vs_packets"]
    if "reference" in ctx.doc:
        cfg = SplitStepConfig.from_model(model, grid, ctx.doc["reference"].get("dt", 1e-3), hbar)
        ref = split_step_solve(cfg, psi0, t0, list(times))
        for r, f, rr in zip(rows, states, ref):
            r.append(l2_distance(f, rr))
        header.append("l2_vs_reference")
    out.csv("comparison.csv", header, rows)
    limit = ctx.checks_cfg.get("max_l2_distance", 1e-3)
    checks = [_check("max_l2_vs_packets", max(devs), max(devs) <= limit, limit=limit)]
    return {"nodes": quad.node_count, "lattice": quad.lattice_count,
            "spacing": quad.spacing, "max_l2_vs_packets": max(devs)}, checks


def _run_residual_sweep(ctx):
    out, model = ctx.out, ctx.model
    hbars = sorted(_as_list(ctx.hbar), reverse=True)
    (q0, p0, _), = ctx.components()[:1]
    x0 = PhasePoint(q0, p0)
    t0, T, _ = ctx.times()
    traj = integrate_characteristics(model, x0, t0, T, [t0 + T], ctx.tol, ctx.cap)
    st = traj.final
    rows = []
    for hb in hbars:
        pk = AnisotropicPacket.from_state(st, x0, hb)
        grid = ctx.grid([pk.center.q], [pk.position_covariance()])
        r = residual_norm(model, st, x0, hb, grid)
        rows.append([hb, r, r / hb**1.5])
    out.csv("residual_sweep.csv", ["hbar", "residual", "residual_over_hbar_1_5"], rows)
    res = np.array([r[1] for r in rows])
    slope = float(np.polyfit(np.log(hbars), np.log(res), 1)[0]) if np.all(res > 0) else float("nan")
    checks = []
    lo, hi = ctx.checks_cfg.get("slope_range", [1.35, 1.65])
    if "max_residual" in ctx.checks_cfg:
        lim = ctx.checks_cfg["max_residual"]
        checks.append(_check("max_residual", float(res.max()), res.max() <= lim, limit=lim))
    else:
        checks.append(_check("loglog_slope", slope, lo <= slope <= hi, range=[lo, hi]))
    return {"t": t0 + T, "slope": slope}, checks


def _run_invariants(ctx):
    out, model = ctx.out, ctx.model
    (q0, p0, _), = ctx.components()[:1]
    t0, T, times = ctx.times()
    traj = integrate_characteristics(model, PhasePoint(q0, p0), t0, T, times, ctx.tol, ctx.cap)
    reports, worst = [], {}
    min_pos = np.inf
    for s in traj.states:
        rep = relation_residuals(s.A, s.B)
        rel = rep.relative()
        reports.append({"t": s.t, "relative": rel, "siegel_pos": rep.siegel_pos})
        for k, v in rel.items():
            worst[k] = max(worst.get(k, 0.0), v)
        if rep.siegel_pos is not None:
            min_pos = min(min_pos, rep.siegel_pos)
    out.json("invariants.json", {"states": reports, "max_relative": worst,
                                 "min_eig_imZ": min_pos})
    lim = ctx.checks_cfg.get("max_relative", 1e-8)
    det_lim = ctx.checks_cfg.get("max_det_identity", 1e-10)
    rel_max = max(v for k, v in worst.items() if k in RelationReport.RELATIONS)
    checks = [_check("max_relative_residual", rel_max, rel_max <= lim, limit=lim),
              _check("min_eig_imZ", min_pos, min_pos > 0),
              _check("det_identity", worst.get("det_identity", 0.0),
                     worst.get("det_identity", 0.0) <= det_lim, limit=det_lim)]
    return {"states": len(reports), "max_relative": worst}, checks


def _run_frame_check(ctx):
    out, model, hbar = ctx.out, ctx.model, float(ctx.hbar)
    t0 = float(ctx.doc.get("time", {}).get("t0", 0.0))
    comps = ctx.components()
    cov = 0.5 * hbar * np.eye(model.dim)
    grid = ctx.grid([q for q, _, _ in comps], [cov] * len(comps))
    psi0 = _initial_state(ctx, grid, hbar)
    cs = sorted(_as_list(ctx.doc["quadrature"].get("spacing_factor", [1.0, 0.5, 0.25])),
                reverse=True)
    rows = []
    for c in cs:
        quad = ctx.quadrature(hbar, c)
        rec = propagate_state(model, psi0, t0, t0, quad, jobs=ctx.jobs)
        rows.append([c, quad.node_count, quad.spacing, l2_distance(rec, psi0)])
    out.csv("frame_check.csv", ["spacing_factor", "nodes", "spacing", "l2_error"], rows)
    errs = [r[3] for r in rows]
    lim = ctx.checks_cfg.get("max_error", 1e-3)
    fine = [r[3] for r in rows if r[0] <= 0.5] or errs[-1:]
    checks = [_check("max_error", max(fine), max(fine) <= lim, limit=lim)]
    if len(errs) > 1:
        dec = all(b < a for a, b in zip(errs, errs[1:]))
        checks.append(_check("strictly_decreasing", errs, dec))
    return {"errors": dict(zip(map(str, cs), errs))}, checks


def _vv_args(ctx):
    vv = ctx.doc["vanvleck"]
    d = ctx.model.dim
    box = vv.get("search_box", 5.0)
    if isinstance(box, list):
        box = (np.atleast_1d(box[0]).astype(float) * np.ones(d),
               np.atleast_1d(box[1]).astype(float) * np.ones(d))
    q = ctx.doc.get("quadrature")
    cut = (q.get("rho", 6.0), q.get("width", 1.0)) if q is not None else None
    return dict(search_box=box, n_starts=vv.get("n_starts", 64), tol=vv.get("tol", SHOOTING_TOLERANCE),
                seed=ctx.seed, cutoff_params=cut, maslov_method=vv.get("maslov_method", "crossings"),
                jobs=ctx.jobs)


def _run_vanvleck(ctx):
    out, model = ctx.out, ctx.model
    d = model.dim
    vv = ctx.doc["vanvleck"]
    y, x = _points(vv["y"], d)[0], _points(vv["x"], d)[0]
    t0, T, _ = ctx.times()
    args = _vv_args(ctx)
    try:
        branches = find_branches(model, y, x, t0, t0 + T, **args)
        warning = None
    except NoBranchFoundError as exc:
        logger.warning("%s", exc)
        branches, warning = [], str(exc)
    write_branch_table(out.path("branches.csv"), branches)
    rows = []
    for hb in _as_list(ctx.hbar):
        K = vanvleck_kernel(x, y, t0, t0 + T, hb, branches)
        rows.append([hb, K.real, K.imag, abs(K)])
    out.csv("kernel.csv", ["hbar", "re", "im", "abs"], rows)
    box = args["search_box"]
    return {"branches": len(branches), "warning": warning,
            "completeness": "relative to the declared search box",
            "search_box": box if not isinstance(box, tuple) else [b.tolist() for b in box],
            "n_starts": args["n_starts"], "seed": ctx.seed}, []


def _run_kernel_compare(ctx):
    out, model = ctx.out, ctx.model
    d = model.dim
    vv = ctx.doc["vanvleck"]
    ys, xs = _points(vv["y"], d), _points(vv["x"], d)
    t0, T, _ = ctx.times()
    t = t0 + T
    args = _vv_args(ctx)
    if args["cutoff_params"] is None:
        args["cutoff_params"] = (6.0, 1.0)
    branch_sets = {}
    off_plateau = 0
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            br = find_branches(model, y, x, t0, t, **args)
            off_plateau += sum(not b.in_plateau for b in br)
            branch_sets[i, j] = [b for b in br if b.in_plateau]
    if off_plateau:
        logger.warning("%d branches start outside the cutoff plateau and are left out",
                       off_plateau)
    rows, worst = [], {}
    for hb in sorted(_as_list(ctx.hbar), reverse=True):
        quad = ctx.quadrature(hb)
        K = kernel_quadrature(model, xs, ys, t0, t, quad, tolerance=ctx.tol, jobs=ctx.jobs)
        dev = 0.0
        for (i, j), br in sorted(branch_sets.items()):
            V = vanvleck_kernel(xs[i], ys[j], t0, t, hb, br)
            rel = abs(K[i, j] - V) / abs(V) if V != 0 else float("inf")
            dev = max(dev, rel)
            rows.append([hb, *xs[i], *ys[j], K[i, j].real, K[i, j].imag, V.real, V.imag, rel])
        worst[hb] = dev
    out.csv("kernel_compare.csv",
            ["hbar"] + [f"x{k}" for k in range(d)] + [f"y{k}" for k in range(d)]
            + ["re_quadrature", "im_quadrature", "re_vanvleck", "im_vanvleck", "rel_deviation"],
            rows)
    devs = [worst[h] for h in sorted(worst, reverse=True)]
    ok = all(b <= a for a, b in zip(devs, devs[1:]))
    checks = [_check("non_increasing_in_hbar", devs, ok)]
    return {"max_relative_deviation": {str(h): v for h, v in worst.items()},
            "off_plateau_branches": off_plateau}, checks


_RUNNERS = {
    "propagate-packet": _run_propagate_packet,
    "propagate-state": _run_propagate_state,
    "residual-sweep": _run_residual_sweep,
    "invariants": _run_invariants,
    "frame-check": _run_frame_check,
    "vanvleck": _run_vanvleck,
    "kernel-compare": _run_kernel_compare,
}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def run_scenario(doc: dict, output_dir=None, jobs: int = 1, seed: int = 0) -> int:
    """Validate and run one scenario; returns the process exit status."""
    problems = validate_config(doc)
    if problems:
        for path, msg in problems:
            logger.error("config error at %s: %s", path or "/", msg)
        return EXIT_CONFIG
    directory = Path(output_dir or doc.get("output", {}).get("directory", "agprop-out"))
    out = _Output(directory)
    ctx = _Ctx(doc, out, jobs, seed)
    status, summary, checks, error = EXIT_OK, {}, [], None
    try:
        summary, checks = _RUNNERS[doc["scenario"]](ctx)
        if not all(c["passed"] for c in checks):
            status = EXIT_CHECK
    except NumericalError as exc:
        status, error = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
        logger.error("scenario %s failed: %s", doc["scenario"], error)
    except ConfigError as exc:
        status, error = EXIT_CONFIG, str(exc)
        logger.error("config error: %s", exc)

    out.json("summary.json", {"scenario": doc["scenario"], "summary": summary,
                              "checks": checks, "error": error})
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    manifest = {
        "scenario": doc["scenario"],
        "config_sha256": hashlib.sha256(canonical).hexdigest(),
        "config": doc,
        "versions": {"agprop": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "tolerances": {"flow_tolerance": ctx.tol, "condition_cap": ctx.cap,
                       "coverage_threshold": COVERAGE_THRESHOLD,
                       "shooting_tolerance": doc.get("vanvleck", {}).get("tol",
                                                                         SHOOTING_TOLERANCE)},
        "jobs": jobs,
        "seed": seed,
        "status": status,
        "error": error,
        "checks": checks,
        "files": [{"path": f, "sha256": _sha256(directory / f)} for f in out.files],
    }
    with open(directory / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in checks:
        logger.info("check %-28s %s", c["name"], "PASS" if c["passed"] else "FAIL")
    return status


def _load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}", "") from exc


def _seed(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _jobs(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("jobs must be at least 1")
    return v


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agprop", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir")
    p_run.add_argument("--jobs", type=_jobs, default=1)
    p_run.add_argument("--seed", type=_seed, default=0)
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = _load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        report = validate_config(doc)
        for path, msg in report:
            print(f"{path or '/'}: {msg}")
        if not report:
            print("ok")
        return EXIT_CONFIG if report else EXIT_OK
    try:
        status = run_scenario(doc, args.output_dir, args.jobs, args.seed)
    except AgpropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_CONFIG
    print({EXIT_OK: "ok", EXIT_CONFIG: "config error", EXIT_NUMERICAL: "numerical failure",
           EXIT_CHECK: "check failed"}[status])
    return status

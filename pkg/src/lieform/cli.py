"""Command-line front end.

    lieform invariants    --manifest M.json [--out DIR] [--tol key=value ...]
    lieform deformability --manifest M.json [--out DIR] [--tol key=value ...]
    lieform deform        --manifest M.json [--section I] [--scale S] [--out DIR]
    lieform verify        --manifest A.json --manifest B.json [--out DIR]

Reports are JSON on stdout (and ``report.json`` in ``--out``).  Exit codes:
0 success, 1 input error, 2 geometric precondition failure, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import catalog, coframe as cf, deformation as dm, frames as fr, surface as sf
from .expr import ExpressionError
from .fields import Grid, GridError, OneForm, ScalarField, SingularCoframeError

log = logging.getLogger("lieform")

EXIT_OK, EXIT_INPUT, EXIT_GEOMETRY, EXIT_VERIFY = 0, 1, 2, 3

DEFAULT_TOLS = {
    "kernel_threshold": dm.KERNEL_THRESHOLD,
    "coframe_equal": 1e-6,
    "congruence": 1e-6,
    "quotient_equal": 1e-6,
    "r_readback_factor": 50.0,
    "section_residual": 1e-2,
    "generic_product": 1e-9,
}

SURFACE_FAMILIES = ("enneper", "torus", "catenoid", "sphere", "paraboloid", "plane", "revolution")
COFRAME_FAMILIES = ("flatweb", "isothermic", "generic", "special", "coframe")


class CliError(Exception):
    def __init__(self, code: int, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.code = code
        self.details = details or {}


# -- manifests -------------------------------------------------------------------------


def _schema(name: str) -> dict:
    return json.loads(resources.files("lieform").joinpath("schemas", name).read_text())


def load_manifest(path: "str | Path") -> tuple[dict, Path]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"malformed JSON in {path}: {exc}")
    try:
        jsonschema.validate(data, _schema("manifest.schema.json"))
    except jsonschema.ValidationError as exc:
        raise CliError(EXIT_INPUT, f"invalid manifest {path}: {exc.message}")
    return data, path.parent


def grid_from(spec: dict) -> Grid:
    n = spec["n"]
    nu, nv = (n, n) if isinstance(n, int) else n
    try:
        return Grid(float(spec["u"][0]), float(spec["u"][1]), float(spec["v"][0]), float(spec["v"][1]), nu, nv)
    except GridError as exc:
        raise CliError(EXIT_INPUT, str(exc))


def coarsen(grid: Grid) -> Optional[Grid]:
    """Every other node of an odd grid (None when too small to coarsen)."""
    if grid.nu % 2 == 0 or grid.nv % 2 == 0 or grid.nu < 9 or grid.nv < 9:
        return None
    return Grid(grid.u0, grid.u1, grid.v0, grid.v1, (grid.nu + 1) // 2, (grid.nv + 1) // 2)


def read_array(base: Path, ref: dict, shape: tuple) -> np.ndarray:
    """Flat little-endian float64 file; ``ref`` is {"file": name} (shape checked)."""
    path = base / ref["file"]
    try:
        arr = np.fromfile(path, dtype="<f8")
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"data file not found: {path}")
    if arr.size != int(np.prod(shape)):
        raise CliError(EXIT_INPUT, f"{path}: expected {int(np.prod(shape))} values for shape {list(shape)}, got {arr.size}")
    return arr.reshape(shape)


# -- resolved inputs -------------------------------------------------------------------


@dataclass
class Resolved:
    kind: str
    grid: Grid
    label: str
    surface: Optional[sf.SurfacePatch] = None
    curvature: Optional[sf.CurvatureData] = None
    classification: Optional[sf.ClassificationReport] = None
    coframe: Optional[cf.Coframe] = None
    invariants: Optional[cf.InvariantSet] = None
    r_source: str = "none"
    extras: dict = field(default_factory=dict)


def _catalog_surface(inp: dict, grid: Grid) -> sf.SurfacePatch:
    fam = inp["family"]
    if fam == "enneper":
        return catalog.enneper(grid)
    if fam == "torus":
        return catalog.torus(float(inp.get("R", 2.0)), float(inp.get("r", 1.0)), grid)
    if fam == "catenoid":
        return catalog.catenoid(grid)
    if fam == "sphere":
        return catalog.sphere(float(inp.get("radius", 1.0)), grid)
    if fam == "paraboloid":
        return catalog.paraboloid(grid)
    if fam == "plane":
        return catalog.plane(grid)
    return catalog.revolution(inp["rho"], inp["height"], grid)


def _flatweb_spec(inp: dict) -> catalog.FlatWebSpec:
    lam, mu = inp.get("lambda", "u"), inp.get("mu", "v")
    if "poly" in inp:
        p = inp["poly"]
        lo_u, hi_u, lo_v, hi_v = p["range"]
        lam = catalog.polynomial_lambda(p["coeffs"], lo_u, hi_u, p.get("x0"), p.get("lam0", 1.0), "u")
        mu = catalog.polynomial_lambda(catalog.mirror_polynomial(p["coeffs"]), lo_v, hi_v, p.get("y0"),
                                       p.get("mu0", 1.0), "v")
    init = inp.get("init")
    return catalog.FlatWebSpec(inp.get("c", 0.0), lam, mu, inp.get("A"), inp.get("B"),
                               tuple(init) if init is not None else None)


def resolve(manifest: dict, base: Path, grid: Optional[Grid] = None, solve: bool = False) -> Resolved:
    inp = manifest["input"]
    kind = inp["kind"]
    grid = grid or grid_from(manifest["grid"])
    try:
        if kind == "catalog" and inp["family"] in SURFACE_FAMILIES:
            S = _catalog_surface(inp, grid)
            return _from_surface(S, grid, f"catalog:{inp['family']}")
        if kind == "sampled-surface":
            F = read_array(base, inp["positions"], manifest_shape(manifest, grid, (3,)))
            return _from_surface(sf.SurfacePatch(grid, F, name="sampled"), grid, "sampled-surface")
        if kind == "catalog":
            return _from_coframe_family(inp, grid, solve)
        if kind == "sampled-coframe":
            comp = read_array(base, inp["alpha"], manifest_shape(manifest, grid, (2, 2)))
            C = _coframe_from_components(grid, comp)
            return Resolved(kind, grid, "sampled-coframe", coframe=C, invariants=cf.extract_invariants(C))
        # invariant-set
        comp = read_array(base, inp["alpha"], manifest_shape(manifest, grid, (2, 2)))
        C = _coframe_from_components(grid, comp)
        fields = {k: ScalarField(grid, read_array(base, inp["fields"][k], manifest_shape(manifest, grid, ())))
                  for k in inp["fields"]}
        missing = [k for k in ("q1", "q2", "p1", "p2") if k not in fields]
        if missing:
            raise CliError(EXIT_INPUT, f"invariant-set lacks {missing}")
        I = cf.InvariantSet(fields["q1"], fields["q2"], fields["p1"], fields["p2"], fields.get("r1"),
                            fields.get("r2"), provenance="supplied")
        return Resolved(kind, grid, "invariant-set", coframe=C, invariants=I,
                        r_source="supplied" if I.has_r else "none")
    except catalog.GeometryError as exc:
        raise CliError(EXIT_GEOMETRY, str(exc))
    except (ExpressionError, catalog.CatalogError) as exc:
        raise CliError(EXIT_INPUT, str(exc))
    except SingularCoframeError as exc:
        raise CliError(EXIT_GEOMETRY, str(exc))


def manifest_shape(manifest: dict, grid: Grid, tail: tuple) -> tuple:
    return grid.shape + tail


def _coframe_from_components(grid: Grid, comp: np.ndarray) -> cf.Coframe:
    def s(a):
        return ScalarField(grid, a)

    return cf.Coframe(OneForm(s(comp[..., 0, 0]), s(comp[..., 0, 1])), OneForm(s(comp[..., 1, 0]), s(comp[..., 1, 1])))


def _from_surface(S: sf.SurfacePatch, grid: Grid, label: str) -> Resolved:
    try:
        C = sf.curvature_data(S)
    except sf.SurfaceError as exc:
        raise CliError(EXIT_GEOMETRY, str(exc))
    report = sf.classify_curvature(C)
    return Resolved("surface", grid, label, surface=S, curvature=C, classification=report)


def _from_coframe_family(inp: dict, grid: Grid, solve: bool) -> Resolved:
    fam = inp["family"]
    if fam == "flatweb":
        fw = catalog.flatweb(_flatweb_spec(inp), grid, solve=solve)
        return Resolved("coframe", grid, "catalog:flatweb", coframe=fw.coframe, invariants=fw.invariants,
                        r_source=fw.report["r_source"], extras={"flatweb": fw})
    if fam in ("isothermic", "generic"):
        mode = inp.get("mode", "isothermic") if fam == "isothermic" else "l-isothermic"
        spec = catalog.IsothermicSpec(inp["psi"], mode)
        C = catalog.isothermic_coframe(spec, grid)
        return Resolved("coframe", grid, f"catalog:{fam}", coframe=C, invariants=cf.extract_invariants(C),
                        extras={"candidate": catalog.isothermic_candidate(spec, grid)})
    if fam == "coframe":
        C = expression_coframe(inp["alpha1"], inp["alpha2"], grid)
        return Resolved("coframe", grid, "catalog:coframe", coframe=C, invariants=cf.extract_invariants(C))
    spec = catalog.SpecialSpec(inp["psi"])
    C, rep = catalog.special_coframe(spec, grid)
    return Resolved("coframe", grid, "catalog:special", coframe=C, invariants=cf.extract_invariants(C),
                    extras={"special": rep, "candidate": catalog.special_candidate(spec, grid)})


def expression_coframe(a1: list, a2: list, grid: Grid) -> cf.Coframe:
    """Coframe from expressions [P, Q] of alpha = P du + Q dv."""
    from .expr import parse

    def sf_(text):
        return ScalarField.from_fn(grid, parse(text))

    return cf.Coframe(OneForm(sf_(a1[0]), sf_(a1[1])), OneForm(sf_(a2[0]), sf_(a2[1])))


def require_nondegenerate(res: Resolved) -> None:
    if res.classification is not None and res.classification.verdict != "nondegenerate":
        raise CliError(EXIT_GEOMETRY, f"surface is not nondegenerate (verdict: {res.classification.verdict})",
                       {"classification": res.classification.to_dict()})


def surface_pipeline(res: Resolved, reduce: bool = True) -> Resolved:
    """Fill coframe and invariants (and r via canonical reduction) for surface input."""
    if res.kind != "surface":
        return res
    require_nondegenerate(res)
    try:
        C = sf.euclidean_coframe(res.curvature)
    except sf.DegenerateError as exc:
        raise CliError(EXIT_GEOMETRY, str(exc), {"classification": exc.report.to_dict()})
    res.coframe = C
    res.invariants = cf.extract_invariants(C)
    if reduce:
        lift = sf.legendre_lift(res.surface, res.curvature)
        try:
            red = fr.canonical_reduction(lift, orientation=C.orientation)
        except fr.ReductionError as exc:
            raise CliError(EXIT_GEOMETRY, f"canonical reduction failed: {exc}")
        res.invariants = res.invariants.with_r(red.invariants.r1, red.invariants.r2)
        res.r_source = "canonical-reduction"
        res.extras["reduction"] = red.report
        res.extras["frame"] = red.frame
    return res


def frame_field(res: Resolved) -> Optional[fr.FrameField]:
    """A frame field realising the input: the reduction frame, or one integrated from its invariants."""
    if "frame" in res.extras:
        return res.extras["frame"]
    if not res.invariants.has_r:
        return None
    try:
        return fr.integrate_frame(fr.assemble_mc(res.invariants, res.coframe))
    except fr.IntegrationDriftError:
        return None


# -- reports ---------------------------------------------------------------------------


def clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def residual_entry(name: str, fine: float, coarse: Optional[float]) -> dict:
    order = None
    if coarse is not None and fine > 0 and coarse > 0:
        order = math.log2(coarse / fine)
    return {"name": name, "max": fine, "order": order}


def summaries(I: cf.InvariantSet) -> dict:
    return {k: v.summary() for k, v in I.fields().items()}


def base_report(command: str, grid: Grid, labels: list) -> dict:
    return {"schema": 1, "command": command, "status": "ok", "exit_code": 0, "inputs": labels,
            "grid": grid.to_dict(), "verdicts": {}, "residuals": [], "summaries": {}, "files": []}


def export_field(out: Optional[Path], name: str, arr: np.ndarray, grid: Grid, report: dict) -> None:
    """Flat little-endian float64 dump plus JSON sidecar."""
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    arr.tofile(out / f"{name}.f64")
    sidecar = {"file": f"{name}.f64", "dtype": "<f8", "order": "C", "shape": list(arr.shape), "grid": grid.to_dict()}
    (out / f"{name}.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    report["files"].append(f"{name}.f64")


def export_csv(out: Optional[Path], name: str, grid: Grid, fields: dict, report: dict) -> None:
    """Long-format table u, v, <field>... for plotting."""
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    uu, vv = grid.mesh()
    keys = sorted(fields)
    with open(out / f"{name}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["u", "v", *keys])
        for i in range(grid.nu):
            for j in range(grid.nv):
                wr.writerow([repr(float(uu[i, j])), repr(float(vv[i, j]))] + [repr(float(fields[k][i, j])) for k in keys])
    report["files"].append(f"{name}.csv")


def _quotient_samples(C: cf.Coframe, n: int = 16, seed: int = 7) -> np.ndarray:
    """Fubini-Blaschke quotient at seeded tangent directions on every node (inf where Phi = 0)."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0.0, np.pi, n)
    pack = cf.form_pack(C)
    return np.stack([pack.quotient(np.cos(t), np.sin(t)) for t in ang], -1)


# -- commands --------------------------------------------------------------------------


def cmd_invariants(manifest: dict, base: Path, out: Optional[Path], tols: dict) -> dict:
    res = resolve(manifest, base)
    report = base_report("invariants", res.grid, [res.label])
    if res.classification is not None:
        report["verdicts"]["classification"] = res.classification.verdict
        report["classification"] = res.classification.to_dict()
    res = surface_pipeline(res, reduce=manifest.get("options", {}).get("reduce", True))
    C, I = res.coframe, res.invariants
    report["verdicts"]["r_available"] = I.has_r
    report["verdicts"]["r_source"] = res.r_source
    coarse = _coarse_invariants(manifest, base, res)
    m = fr.report_margin(res.grid)
    web = cf.web(C, I.q1, I.q2)
    report["verdicts"]["diagonally_cyclidic"] = bool(web.diagonally_cyclidic)
    gauss = cf.gauss_residual(I, C)
    rows = [("web_identity", web.identity_residual.max_abs(m))]
    rows += [(f"gauss_{k}", v.max_abs(m)) for k, v in gauss.items()]
    if I.has_r:
        rows += [(f"codazzi_{k+1}", c.max_abs(m)) for k, c in enumerate(cf.codazzi_residual(I, C))]
    if res.curvature is not None:
        q_bg = sf.q_from_betagamma(sf.beta_gamma(res.curvature))
        rows.append(("q_cross_path", max((q_bg[0] - I.q1).max_abs(m), (q_bg[1] - I.q2).max_abs(m))))
    for name, fine in rows:
        report["residuals"].append(residual_entry(name, fine, coarse.get(name)))
    report["summaries"] = summaries(I)
    report["summaries"]["R_w"] = web.curvature.summary()
    if "reduction" in res.extras:
        report["reduction"] = res.extras["reduction"]
    fields = {"alpha": C.components(), "R_w": web.curvature.values}
    fields.update({k: v.values for k, v in I.fields().items()})
    for k, v in fields.items():
        export_field(out, k, v, res.grid, report)
    q = _quotient_samples(C, 4)
    pack = cf.form_pack(C)
    export_field(out, "Phi_Psi_samples", np.stack([pack.quadratic(1.0, 0.5), pack.cubic(1.0, 0.5)], -1), res.grid, report)
    export_csv(out, "invariants", res.grid, {k: v.values for k, v in I.fields().items()}, report)
    report["quotient_finite_fraction"] = float(np.mean(np.isfinite(q)))
    return report


def _coarse_invariants(manifest: dict, base: Path, res: Resolved) -> dict:
    """Same residual table on the coarsened grid, for order estimates (catalog inputs only)."""
    g = coarsen(res.grid)
    if g is None or manifest["input"]["kind"] != "catalog":
        return {}
    try:
        r2 = surface_pipeline(resolve(manifest, base, g), reduce=res.invariants.has_r and res.kind == "surface")
    except CliError:
        return {}
    C, I = r2.coframe, r2.invariants
    if res.r_source != "none" and not I.has_r:
        return {}
    m = fr.report_margin(g)
    web = cf.web(C, I.q1, I.q2)
    out = {"web_identity": web.identity_residual.max_abs(m)}
    out.update({f"gauss_{k}": v.max_abs(m) for k, v in cf.gauss_residual(I, C).items()})
    if I.has_r:
        out.update({f"codazzi_{k+1}": c.max_abs(m) for k, c in enumerate(cf.codazzi_residual(I, C))})
    if r2.curvature is not None:
        q_bg = sf.q_from_betagamma(sf.beta_gamma(r2.curvature))
        out["q_cross_path"] = max((q_bg[0] - I.q1).max_abs(m), (q_bg[1] - I.q2).max_abs(m))
    return out


def _deformability(res: Resolved, tols: dict):
    s = dm.sigma(res.invariants, res.coframe)
    curv = dm.sigma_curvature(s)
    space = dm.solve_parallel(s, threshold=tols["kernel_threshold"])
    return s, curv, space


def cmd_deformability(manifest: dict, base: Path, out: Optional[Path], tols: dict) -> dict:
    res = resolve(manifest, base)
    report = base_report("deformability", res.grid, [res.label])
    if res.classification is not None:
        report["verdicts"]["classification"] = res.classification.verdict
    res = surface_pipeline(res, reduce=False)
    s, curv, space = _deformability(res, tols)
    m = fr.report_margin(res.grid)
    report["verdicts"]["dim"] = space.dim
    report["verdicts"]["deformable"] = space.dim > 0
    report["verdicts"]["sections"] = [dm.classify_deformation(b, tols["generic_product"]) for b in space.basis]
    report["spectrum"] = [float(x) for x in space.spectrum]
    report["parallel"] = space.to_dict()
    report["residuals"].append(residual_entry("curvature_closed_form_difference", curv.max_difference(m), None))
    report["residuals"].append(residual_entry("curvature_numeric", curv.max_numeric(m), None))
    for k, r in enumerate(space.residuals):
        report["residuals"].append(residual_entry(f"section_{k}", r, None))
    report["summaries"] = summaries(res.invariants)
    fw = res.extras.get("flatweb")
    if fw is not None:
        report["candidates"] = _candidate_table(fw, s, space, m)
    for key in ("candidate",):
        if key in res.extras:
            w = res.extras[key]
            report["candidates"] = [{"label": res.label, "residual": dm.parallel_residual(s, w).max_abs(m),
                                     "span_residual": space.span_residual(w),
                                     "class": dm.classify_deformation(w, tols["generic_product"])}]
    for k, b in enumerate(space.basis):
        export_field(out, f"section_{k}", np.stack([x.values for x in b], -1), res.grid, report)
    return report


def _candidate_table(fw: catalog.FlatWeb, s, space, m) -> list:
    rows = []
    for label, w in fw.candidates:
        rows.append({"label": label, "residual": dm.parallel_residual(s, w).max_abs(m),
                     "span_residual": space.span_residual(w)})
    return rows


def cmd_deform(manifest: dict, base: Path, out: Optional[Path], tols: dict, section: int, scale: float) -> dict:
    res = resolve(manifest, base)
    report = base_report("deform", res.grid, [res.label])
    res = surface_pipeline(res, reduce=manifest.get("options", {}).get("reduce", True))
    I, C = res.invariants, res.coframe
    if not I.has_r:
        raise CliError(EXIT_GEOMETRY, "r unavailable: deformation needs r1, r2 (closed-form A, B, integration "
                                      "data or canonical reduction)")
    _, _, space = _deformability(res, tols)
    report["verdicts"]["dim"] = space.dim
    if space.dim == 0:
        raise CliError(EXIT_GEOMETRY, "no parallel sections: the surface is not deformable",
                       {"spectrum": [float(x) for x in space.spectrum]})
    if not 0 <= section < space.dim:
        raise CliError(EXIT_INPUT, f"section index {section} outside 0..{space.dim - 1}")
    coeffs = np.zeros(space.dim)
    coeffs[section] = scale
    w = space.section(coeffs)
    result = dm.deform(I, C, w, r_factor=tols["r_readback_factor"])
    report["verdicts"]["trivial"] = result.report["trivial"]
    report["verdicts"]["congruent"] = result.report["congruent"]
    report["verdicts"]["contact_orders"] = [c["order"] for c in result.report["contact_orders"]]
    failures = list(result.failures)
    if result.report["trivial"]:
        # D is the identity: f and f~ coincide, so no contact order is expected
        failures = [f for f in failures if not f.startswith("contact orders")]
    report["verdicts"]["verified"] = not failures
    report["verdicts"]["section_class"] = dm.classify_deformation(w, tols["generic_product"])
    report["deformation"] = result.report
    report["failures"] = failures
    report["section"] = {"index": section, "scale": scale}
    report["summaries"] = {"original": summaries(I), "deformed": summaries(result.deformed)}
    for name, arr in (("f", np.stack([result.f.f0, result.f.f1], -2)),
                      ("f_deformed", np.stack([result.ft.f0, result.ft.f1], -2)), ("D", result.D.A)):
        export_field(out, name, arr, res.grid, report)
    if out is not None:
        _export_invariant_manifest(out, "deformed", C, result.deformed, res.grid, report)
        _export_invariant_manifest(out, "original", C, I, res.grid, report)
    if failures:
        report["status"] = "verification-failed"
        report["exit_code"] = EXIT_VERIFY
    return report


def _export_invariant_manifest(out: Path, prefix: str, C: cf.Coframe, I: cf.InvariantSet, grid: Grid, report: dict):
    """An invariant-set manifest (plus arrays) that ``verify`` can read back."""
    sub = {"file": f"{prefix}_alpha.f64"}
    export_field(out, f"{prefix}_alpha", C.components(), grid, report)
    fields = {}
    for k, v in I.fields().items():
        export_field(out, f"{prefix}_{k}", v.values, grid, report)
        fields[k] = {"file": f"{prefix}_{k}.f64"}
    manifest = {"schema": 1, "grid": {"u": [grid.u0, grid.u1], "v": [grid.v0, grid.v1], "n": [grid.nu, grid.nv]},
                "input": {"kind": "invariant-set", "alpha": sub, "fields": fields}}
    (out / f"{prefix}_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    report["files"].append(f"{prefix}_manifest.json")


def cmd_verify(pairs: list, out: Optional[Path], tols: dict) -> dict:
    (m1, b1), (m2, b2) = pairs
    g1, g2 = grid_from(m1["grid"]), grid_from(m2["grid"])
    if g1 != g2:
        raise CliError(EXIT_INPUT, f"inputs live on different grids: {g1} vs {g2}")
    r1 = surface_pipeline(resolve(m1, b1), reduce=True)
    r2 = surface_pipeline(resolve(m2, b2), reduce=True)
    report = base_report("verify", g1, [r1.label, r2.label])
    C1, C2, I1, I2 = r1.coframe, r2.coframe, r1.invariants, r2.invariants
    scale = max(1.0, float(np.max(np.abs(C1.components()))))
    d_same = float(np.max(np.abs(C1.components() - C2.components()))) / scale
    same = d_same <= tols["coframe_equal"]
    m = fr.report_margin(g1)
    sl = g1.interior(m)
    # (2): omega^1, omega^2 of two actual frame fields, read back by differencing the frames
    F1, F2 = frame_field(r1), frame_field(r2)
    pullback, d_frame = None, None
    if F1 is not None and F2 is not None:
        D1, D2 = F1.coframe().components(), F2.coframe().components()
        d_frame = float(np.max(np.abs(D1 - D2)[sl])) / scale
        pullback = bool(d_frame <= 50.0 * g1.h**2)
    f1, f2 = I1.fields(), I2.fields()
    # relative differences away from the boundary, where one-sided stencils dominate
    inv_diff = {k: float(np.max(np.abs(f1[k].values - f2[k].values)[sl] / np.maximum(1.0, np.abs(f1[k].values[sl]))))
                for k in f1 if k in f2}
    congruent = None
    if I1.has_r and I2.has_r:
        congruent = bool(max(inv_diff.values()) <= tols["congruence"])
    q1, q2 = _quotient_samples(C1), _quotient_samples(C2)
    both_inf = np.isinf(q1) & np.isinf(q2)
    qscale = np.maximum(1.0, np.abs(np.where(np.isfinite(q1), q1, 0.0)))
    qdiff = np.where(both_inf, 0.0, np.abs(np.where(np.isfinite(q1) & np.isfinite(q2), q1 - q2, np.inf)) / qscale)
    qmax = float(np.max(qdiff[g1.interior(m)]))
    same_quotient = qmax <= tols["quotient_equal"]
    # (1): equal coframe and r differing by (w1, w2) that extends to a parallel section
    deformation = None
    section_res = None
    if I1.has_r and I2.has_r and same:
        w1, w2 = I1.r1 - I2.r1, I1.r2 - I2.r2
        nontrivial = max(w1.max_abs(m), w2.max_abs(m)) > tols["congruence"]
        s = dm.sigma(I1, C1)
        w3 = _complete_section(s, w1)
        section_res = dm.parallel_residual(s, (w1, w2, w3)).max_abs(m)
        deformation = bool(nontrivial and section_res <= tols["section_residual"])
    elif not same:
        deformation = False
    report["verdicts"] = {
        "deformation": deformation,
        "frame_pullback": pullback,
        "same_coframe": bool(same),
        "same_quotient": bool(same_quotient),
        "congruent": congruent,
    }
    report["residuals"] = [
        {"name": "coframe_difference", "max": d_same, "order": None},
        {"name": "quotient_difference", "max": qmax, "order": None},
    ]
    if d_frame is not None:
        report["residuals"].append({"name": "frame_coframe_difference", "max": d_frame, "order": None})
    if section_res is not None:
        report["residuals"].append({"name": "difference_section_residual", "max": section_res, "order": None})
    report["invariant_differences"] = inv_diff
    report["comparison_margin"] = m
    report["summaries"] = {"first": summaries(I1), "second": summaries(I2)}
    return report


def _complete_section(s: dm.SigmaConnection, w1: ScalarField) -> ScalarField:
    """w3 from the du part of the first row: w1_u + sigma_00(du) w1 = alpha1(du) w3 (or dv part)."""
    a = s.coframe.alpha1
    use_u = float(np.min(np.abs(a.P.values))) >= float(np.min(np.abs(a.Q.values)))
    if use_u:
        num = w1.du().values + s.form.P[..., 0, 0] * w1.values
        den = -s.form.P[..., 0, 2]
    else:
        num = w1.dv().values + s.form.Q[..., 0, 0] * w1.values
        den = -s.form.Q[..., 0, 2]
    return ScalarField(s.grid, num / den)


# -- entry point -------------------------------------------------------------------------


def parse_tols(items: list, manifest_tols: Optional[dict] = None) -> dict:
    tols = dict(DEFAULT_TOLS)
    for k, v in (manifest_tols or {}).items():
        if k not in tols:
            raise CliError(EXIT_INPUT, f"unknown tolerance {k!r} (known: {sorted(tols)})")
        tols[k] = float(v)
    for item in items or []:
        if "=" not in item:
            raise CliError(EXIT_INPUT, f"tolerance override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        if k not in tols:
            raise CliError(EXIT_INPUT, f"unknown tolerance {k!r} (known: {sorted(tols)})")
        try:
            tols[k] = float(v)
        except ValueError:
            raise CliError(EXIT_INPUT, f"tolerance {k} is not a number: {v!r}")
    return tols


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lieform", description="Legendre surface invariants and deformations")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("invariants", "deformability", "deform", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", action="append", required=True)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE")
        if name == "deform":
            sp.add_argument("--section", type=int, default=0)
            sp.add_argument("--scale", type=float, default=1.0)
    return p


def run(argv: Optional[list] = None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    grid = None
    try:
        manifests = [load_manifest(m) for m in args.manifest]
        tols = parse_tols(args.tol, manifests[0][0].get("tolerances"))
        if args.command == "verify":
            if len(manifests) != 2:
                raise CliError(EXIT_INPUT, "verify needs exactly two --manifest arguments")
            report = cmd_verify(manifests, args.out, tols)
        else:
            if len(manifests) != 1:
                raise CliError(EXIT_INPUT, f"{args.command} takes one --manifest")
            m, base = manifests[0]
            grid = grid_from(m["grid"])
            if args.command == "invariants":
                report = cmd_invariants(m, base, args.out, tols)
            elif args.command == "deformability":
                report = cmd_deformability(m, base, args.out, tols)
            else:
                report = cmd_deform(m, base, args.out, tols, args.section, args.scale)
    except CliError as exc:
        report = {"schema": 1, "command": args.command, "status": "error", "exit_code": exc.code,
                  "error": str(exc), "details": exc.details, "verdicts": {}, "residuals": [], "files": []}
        if grid is not None:
            report["grid"] = grid.to_dict()
        if "classification" in exc.details:
            report["verdicts"]["classification"] = exc.details["classification"]["verdict"]
    report = clean(report)
    jsonschema.validate(report, _schema("report.schema.json"))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(dumps(report))
    return report["exit_code"], report


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def main(argv: Optional[list] = None) -> int:
    code, report = run(argv)
    sys.stdout.write(dumps(report))
    return code


if __name__ == "__main__":
    raise SystemExit(main())

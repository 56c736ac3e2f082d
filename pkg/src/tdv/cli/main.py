"""``tdv`` command line.

Options come from three layers, later ones winning: built-in defaults, a
JSON ``--config`` file (keys are option names with underscores), and flags
given on the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from ..apps import JointModelSpec, denoise_joint, denoise_single, interpolate_surface, psnr, ssim, zoom_wavelet
from ..wavelet import coarse_from_lowres, dwt_forward
from .io import load_heightmap, load_image, read_csv_field, save_image, write_csv_field
from .synth import SamplingSpec, add_gaussian_noise, make_sampling_mask

__all__ = ["build_parser", "run", "main", "CLIError"]

logger = logging.getLogger("tdv")


class CLIError(ValueError):
    pass


DEFAULTS = {
    "common": {"output": None, "seed": 0, "trace": None, "metrics": None, "reference": None, "noise": 0.0, "bits": 8, "verbose": False},
    "denoise": {
        "orders": "1,0,0",
        "eta": 1.0,
        "b2": "vary",
        "sigma": 1.8,
        "rho": 2.8,
        "outer": 2,
        "iters": 500,
        "isotropic": False,
        "accelerated": False,
        "export_v": None,
        "export_beta": None,
    },
    "denoise-single": {
        "q": 2,
        "levels": None,
        "alpha": None,
        "eta": 1.0,
        "b2": "vary",
        "sigma": 1.8,
        "rho": 2.8,
        "iters": 500,
    },
    "zoom": {
        "orders": "1,0,0",
        "levels": 2,
        "b2": 0.1,
        "sigma": 1.0,
        "rho": 2.0,
        "outer": 1,
        "iters": 500,
        "isotropic": False,
        "from_highres": False,
        "export_v": None,
    },
    "surface": {
        "heightmap": None,
        "samples": None,
        "mask_mode": "contours",
        "density": 0.07,
        "alpha1": 0.0,
        "alpha2": 0.1,
        "alpha3": 1.0,
        "eta": 1000.0,
        "indicator": False,
        "mu": 1.0,
        "zeta": 1.0,
        "outer": 10,
        "iters": 2000,
        "export_v": None,
    },
}


def _common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--output", help="result path")
    p.add_argument("--seed", type=int, help="seed for noise, sampling and random starts")
    p.add_argument("--trace", help="CSV trace of iteration, energy, gap")
    p.add_argument("--metrics", help="write metrics JSON here")
    p.add_argument("--reference", help="ground truth for PSNR/SSIM")
    p.add_argument("--noise", type=float, help="add Gaussian noise of this fraction of the range first")
    p.add_argument("--bits", type=int, choices=(8, 16), help="bit depth of PNG output")
    p.add_argument("--verbose", action="store_true", help="log progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdv", description="Total directional variation regularisation")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("denoise", help="joint-model denoising", argument_default=S)
    _common(p)
    p.add_argument("--input", required=True, help="PNG/PGM/PPM image")
    p.add_argument("--orders", help="weights of orders 1,2,3, e.g. 1,0,1")
    p.add_argument("--eta", type=float, help="data fidelity weight")
    p.add_argument("--b2", help="contraction weight in [0,1] or 'vary'")
    p.add_argument("--sigma", type=float, help="structure tensor pre-smoothing")
    p.add_argument("--rho", type=float, help="structure tensor integration scale")
    p.add_argument("--outer", type=int, help="direction re-estimation rounds")
    p.add_argument("--iters", type=int, help="PDHG iterations per round")
    p.add_argument("--isotropic", action="store_true", help="identity weights (plain higher-order TV)")
    p.add_argument("--accelerated", action="store_true", help="strongly convex step schedule")
    p.add_argument("--export-v", help="write the direction field (.npy or CSV)")
    p.add_argument("--export-beta", help="write the contraction weight (.npy or CSV)")

    p = sub.add_parser("denoise-single", help="single-order full model", argument_default=S)
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--q", type=int, choices=(1, 2, 3), help="order")
    p.add_argument("--levels", help="per-level weighting, e.g. M,I")
    p.add_argument("--alpha", help="alpha_0..alpha_{q-1}, e.g. 1,1.25")
    p.add_argument("--eta", type=float)
    p.add_argument("--b2")
    p.add_argument("--sigma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("zoom", help="wavelet-constrained zooming", argument_default=S)
    _common(p)
    p.add_argument("--input", required=True, help="low-resolution image (or ground truth with --from-highres)")
    p.add_argument("--orders")
    p.add_argument("--levels", type=int, help="wavelet depth; zoom factor is 2**levels")
    p.add_argument("--b2")
    p.add_argument("--sigma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--outer", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--isotropic", action="store_true")
    p.add_argument("--from-highres", action="store_true", help="take the coarse band of the input and zoom it back")
    p.add_argument("--export-v")

    p = sub.add_parser("surface", help="surface interpolation from scattered heights", argument_default=S)
    _common(p)
    p.add_argument("--heightmap", help="reference heights (.csv or .hgt) to sample from")
    p.add_argument("--samples", help="CSV of samples; NaN marks missing")
    p.add_argument("--mask-mode", choices=("contours", "random", "spiral"))
    p.add_argument("--density", type=float, help="sampled fraction, or under-sampling ratio for spirals")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--alpha3", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--indicator", action="store_true", help="interpolate the samples exactly")
    p.add_argument("--mu", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--outer", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--export-v")
    return parser


def _resolve(ns: argparse.Namespace) -> dict:
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    cfg = {}
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            cfg = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    allowed = set(DEFAULTS["common"]) | set(DEFAULTS[ns.command]) | {"input", "output"}
    unknown = set(cfg) - allowed
    if unknown:
        raise CLIError(f"unknown config keys for {ns.command}: {', '.join(sorted(unknown))}")
    opts = {**DEFAULTS["common"], **DEFAULTS[ns.command], **cfg, **given}
    opts["_given"] = set(given) | set(cfg)
    opts["command"] = ns.command
    return opts


def _floats(s, name, n=None):
    try:
        vals = [float(x) for x in str(s).split(",")] if not isinstance(s, (list, tuple)) else [float(x) for x in s]
    except ValueError as exc:
        raise CLIError(f"--{name} expects comma-separated numbers, got {s!r}") from exc
    if n is not None and len(vals) != n:
        raise CLIError(f"--{name} expects {n} values, got {len(vals)}")
    return vals


def _beta(s):
    if s == "vary":
        return "vary"
    try:
        b = float(s)
    except ValueError as exc:
        raise CLIError(f"--b2 expects a number in [0,1] or 'vary', got {s!r}") from exc
    if not 0 <= b <= 1:
        raise CLIError(f"--b2 must lie in [0, 1], got {b}")
    return b


def _validate(o):
    for key in ("eta", "mu", "zeta"):
        if key in o and o[key] is not None and not o[key] > 0:
            raise CLIError(f"--{key} must be positive")
    for key in ("iters", "outer"):
        if key in o and not o[key] >= 1:
            raise CLIError(f"--{key} must be at least 1")
    if o["noise"] < 0:
        raise CLIError("--noise must be nonnegative")
    cmd = o["command"]
    if cmd in ("denoise", "zoom"):
        orders = _floats(o["orders"], "orders")
        if not 1 <= len(orders) <= 3 or any(a < 0 for a in orders) or not any(a > 0 for a in orders):
            raise CLIError("--orders needs 1..3 nonnegative weights, at least one positive")
        o["orders"] = orders
        o["b2"] = _beta(o["b2"])
        if o["isotropic"] and "b2" in o["_given"]:
            raise CLIError("--isotropic ignores --b2; give only one of them")
        if o.get("export_v") and o["isotropic"]:
            raise CLIError("--export-v needs an anisotropic run")
    if cmd == "denoise":
        if o["isotropic"] and o.get("export_beta"):
            raise CLIError("--export-beta needs an anisotropic run")
    if cmd == "denoise-single":
        q = o["q"]
        o["levels"] = ["I"] * q if o["levels"] is None else str(o["levels"]).split(",")
        if len(o["levels"]) != q or any(x not in ("I", "M") for x in o["levels"]):
            raise CLIError(f"--levels needs {q} entries from I, M")
        o["alpha"] = [1.0] * q if o["alpha"] is None else _floats(o["alpha"], "alpha", q)
        if any(a <= 0 for a in o["alpha"]):
            raise CLIError("--alpha entries must be positive")
        o["b2"] = _beta(o["b2"])
    if cmd == "surface":
        if o["indicator"] and "eta" in o["_given"]:
            raise CLIError("--indicator imposes the samples exactly; it cannot be combined with --eta")
        if (o["samples"] is None) == (o["heightmap"] is None):
            raise CLIError("give exactly one of --samples or --heightmap")
        if o["samples"] is not None and "mask_mode" in o["_given"]:
            raise CLIError("--mask-mode applies to --heightmap sampling only")
        if not 0 < o["density"] <= 1:
            raise CLIError("--density must lie in (0, 1]")
        if not any(o[k] > 0 for k in ("alpha1", "alpha2", "alpha3")) or any(o[k] < 0 for k in ("alpha1", "alpha2", "alpha3")):
            raise CLIError("order weights must be nonnegative with at least one positive")
    if o["output"] is None:
        raise CLIError("--output is required")
    return o


def _export(path, a):
    a = np.asarray(a, dtype=float)
    if str(path).endswith(".npy"):
        np.save(path, a)
    else:
        write_csv_field(path, a.reshape(-1, a.shape[-1]))


def _channels(img):
    return img if isinstance(img, list) else [img]


def _pack(chs, like):
    return chs if isinstance(like, list) else chs[0]


def _metrics(u_chs, ref, extra):
    m = {"psnr": None, "ssim": None}
    if ref is not None:
        ref_chs = _channels(ref)
        if len(ref_chs) != len(u_chs) or ref_chs[0].shape != u_chs[0].shape:
            raise CLIError("reference does not match the result shape")
        p = float(np.mean([psnr(u, r) for u, r in zip(u_chs, ref_chs)]))
        m["psnr"] = p if math.isfinite(p) else None
        m["ssim"] = float(np.mean([ssim(u, r) for u, r in zip(u_chs, ref_chs)]))
    m.update(extra)
    return m


def _run_denoise(o):
    img = load_image(o["input"])
    clean = img
    chs = [add_gaussian_noise(c, o["noise"], o["seed"] + i) for i, c in enumerate(_channels(img))]
    ref = load_image(o["reference"]) if o["reference"] else (clean if o["noise"] > 0 else None)
    out, its, gaps, energies, vs, betas = [], 0, [], [], [], []
    for c in chs:
        if o["command"] == "denoise":
            spec = JointModelSpec(
                orders=tuple(o["orders"]),
                eta=o["eta"],
                beta=o["b2"],
                sigma=o["sigma"],
                rho=o["rho"],
                outer=o["outer"],
                inner=o["iters"],
                isotropic=o["isotropic"],
                accelerated=o["accelerated"],
            )
            r = denoise_joint(c, spec, trace=o["trace"])
            out.append(r.u)
            vs.append(r.v)
            betas.append(r.beta)
        else:
            r = denoise_single(
                c,
                o["q"],
                o["levels"],
                o["alpha"],
                o["eta"],
                sigma=o["sigma"],
                rho=o["rho"],
                beta=o["b2"],
                max_iters=o["iters"],
                trace=o["trace"],
            )
            out.append(r.u)
        its += r.iterations
        gaps.append(r.final_gap)
        energies.append(r.energy)
    save_image(o["output"], _pack(out, img), o["bits"])
    if o.get("export_v"):
        _export(o["export_v"], vs[0])
    if o.get("export_beta"):
        _export(o["export_beta"], betas[0])
    return _metrics(out, ref, {"iterations": its, "final_gap": _total(gaps), "energy": _total(energies)})


def _total(xs):
    vals = [x for x in xs if x is not None]
    return float(sum(vals)) if vals else None


def _run_zoom(o):
    img = load_image(o["input"])
    R = o["levels"]
    out, its, vs = [], 0, []
    ref = load_image(o["reference"]) if o["reference"] else (img if o["from_highres"] else None)
    for c in _channels(img):
        coarse = dwt_forward(c, R).coarse if o["from_highres"] else coarse_from_lowres(c, R)
        r = zoom_wavelet(
            coarse,
            o["orders"],
            R,
            anisotropic=not o["isotropic"],
            beta=o["b2"],
            sigma=o["sigma"],
            rho=o["rho"],
            outer=o["outer"],
            inner=o["iters"],
            trace=o["trace"],
        )
        out.append(r.u)
        vs.append(r.v)
        its += r.iterations
    save_image(o["output"], _pack(out, img), o["bits"])
    if o.get("export_v"):
        _export(o["export_v"], vs[0])
    return _metrics(out, ref, {"iterations": its, "final_gap": None, "energy": None})


def _run_surface(o):
    if o["samples"] is not None:
        data = read_csv_field(o["samples"])
        mask = np.isfinite(data)
        values = np.where(mask, data, 0.0)
        ref = load_heightmap(o["reference"])[0] if o["reference"] else None
    else:
        heights, valid = load_heightmap(o["heightmap"])
        spec = SamplingSpec(o["mask_mode"], o["density"])
        mask = make_sampling_mask(spec, heights.shape, o["seed"], reference=heights) & valid
        values = heights
        ref = heights
    if not mask.any():
        raise CLIError("no valid samples")
    r = interpolate_surface(
        values,
        mask,
        (o["alpha1"], o["alpha2"], o["alpha3"]),
        eta=None if o["indicator"] else o["eta"],
        mu=o["mu"],
        zeta=o["zeta"],
        outer=o["outer"],
        inner=o["iters"],
        seed=o["seed"],
        trace=o["trace"],
    )
    if str(o["output"]).endswith(".npy"):
        np.save(o["output"], r.u)
    else:
        write_csv_field(o["output"], r.u)
    if o.get("export_v"):
        _export(o["export_v"], r.v)
    last = r.solves[-1]
    return _metrics([r.u], ref, {"iterations": r.iterations, "final_gap": last.final_gap, "energy": last.energy})


def run(argv=None) -> int:
    """Parse ``argv``, run the pipeline and return an exit code."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        o = _validate(_resolve(ns))
        if o["verbose"]:
            logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
        if o["command"] in ("denoise", "denoise-single"):
            metrics = _run_denoise(o)
        elif o["command"] == "zoom":
            metrics = _run_zoom(o)
        else:
            metrics = _run_surface(o)
    except (CLIError, ValueError, OSError, RuntimeError) as exc:
        print(f"tdv {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if o["metrics"]:
        with open(o["metrics"], "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def main():
    sys.exit(run())
